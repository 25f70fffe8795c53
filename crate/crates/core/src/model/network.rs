//! The learnable components: backbone, part encoders, classifier bank,
//! generator, and the two discriminators.

use candle_core::{DType, Tensor};
use rand_distr::{Distribution, StandardNormal};

use super::{ModelConfig, PartFeatureSet, PartLayout, StripPolicy};
use crate::error::{Error, Result};
use crate::model::layout::strip_windows;
use crate::nn::ops::{global_max_pool, leaky_relu, tensor_from_f64};
use crate::nn::{
    BatchNorm, Builder, Conv2d, ConvTranspose2d, Ctx, Dropout, Init, InstanceNorm, Linear,
    ParamStore,
};
use crate::rng::ChaCha8Rng;

const LRELU_SLOPE: f64 = 0.2;

fn he(fan_in: usize) -> Init {
    Init::Normal {
        std: (2.0 / fan_in as f64).sqrt(),
    }
}

const DCGAN_INIT: Init = Init::Normal { std: 0.02 };

/// Maps `[0,1]` images to `[-1,1]`.
fn centered(images: &Tensor) -> Result<Tensor> {
    Ok(images.affine(2.0, -1.0)?)
}

/// A convolutional feature extractor feeding both part encoders.
///
/// Implement this to plug in a pretrained network for real data.
pub trait Backbone: Send + Sync {
    /// `[B, 3, H, W]` images in `[0,1]` to a `[B, C_f, H_f, W_f]` map.
    fn forward(&self, images: &Tensor, ctx: &mut Ctx) -> Result<Tensor>;
    fn out_channels(&self) -> usize;
    fn output_size(&self, height: usize, width: usize) -> (usize, usize);
    fn store(&self) -> &ParamStore;
}

/// Conv3×3 → BN → ReLU blocks with configurable widths and strides.
pub struct ToyBackbone {
    store: ParamStore,
    blocks: Vec<(Conv2d, BatchNorm)>,
    strides: Vec<usize>,
    out_channels: usize,
}

impl ToyBackbone {
    pub fn new(
        channels: &[usize],
        strides: &[usize],
        rng: &mut ChaCha8Rng,
        dtype: DType,
    ) -> Result<Self> {
        if channels.is_empty() || channels.len() != strides.len() {
            return Err(Error::Config(
                "backbone_channels and backbone_strides must be non-empty and of equal length"
                    .into(),
            ));
        }
        let mut store = ParamStore::new();
        let mut blocks = Vec::new();
        {
            let mut b = Builder::new(&mut store, rng, dtype);
            let mut in_c = 3;
            for (i, (&c, &s)) in channels.iter().zip(strides).enumerate() {
                let mut sb = b.sub(&format!("block{i}"));
                let conv = Conv2d::new(&mut sb.sub("conv"), in_c, c, 3, s, 1, he(in_c * 9))?;
                let bn = BatchNorm::new(&mut sb.sub("bn"), c)?;
                blocks.push((conv, bn));
                in_c = c;
            }
        }
        Ok(ToyBackbone {
            store,
            blocks,
            strides: strides.to_vec(),
            out_channels: *channels.last().unwrap(),
        })
    }
}

impl Backbone for ToyBackbone {
    fn forward(&self, images: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut h = centered(images)?;
        for (conv, bn) in &self.blocks {
            h = bn.forward(&conv.forward(&h)?, ctx)?.relu()?;
        }
        Ok(h)
    }

    fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        // k=3, pad=1
        self.strides.iter().fold((height, width), |(h, w), &s| {
            ((h - 1) / s + 1, (w - 1) / s + 1)
        })
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }
}

/// Two conv layers, region max-pooling and a shared bottleneck for one branch.
struct BranchHead {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    bottleneck: Linear,
    bn3: BatchNorm,
    strips: usize,
}

impl BranchHead {
    fn new(b: &mut Builder, in_c: usize, hidden: usize, p: usize, strips: usize) -> Result<Self> {
        Ok(BranchHead {
            conv1: Conv2d::new(&mut b.sub("conv1"), in_c, hidden, 3, 1, 1, he(in_c * 9))?,
            bn1: BatchNorm::new(&mut b.sub("bn1"), hidden)?,
            conv2: Conv2d::new(&mut b.sub("conv2"), hidden, hidden, 3, 1, 1, he(hidden * 9))?,
            bn2: BatchNorm::new(&mut b.sub("bn2"), hidden)?,
            bottleneck: Linear::new(&mut b.sub("bottleneck"), hidden, p, false)?,
            bn3: BatchNorm::new(&mut b.sub("bn3"), p)?,
            strips,
        })
    }

    /// Global vector first, then one vector per strip, each `[B, p]`.
    fn forward(&self, fmap: &Tensor, policy: StripPolicy, ctx: &mut Ctx) -> Result<Vec<Tensor>> {
        let h = self.bn1.forward(&self.conv1.forward(fmap)?, ctx)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, ctx)?.relu()?;
        let mut pooled = vec![global_max_pool(&h)?];
        if self.strips > 1 {
            for (start, len) in strip_windows(h.dim(2)?, self.strips, policy)? {
                pooled.push(global_max_pool(&h.narrow(2, start, len)?)?);
            }
        }
        let b = fmap.dim(0)?;
        let stacked = Tensor::cat(&pooled, 0)?;
        let reduced = self.bn3.forward(&self.bottleneck.forward(&stacked)?, ctx)?;
        (0..pooled.len())
            .map(|i| Ok(reduced.narrow(0, i * b, b)?))
            .collect()
    }
}

/// Part-branch encoder (used for both the identity-related and -unrelated heads).
pub struct PartEncoder {
    branches: Vec<BranchHead>,
    layout: PartLayout,
    policy: StripPolicy,
}

impl PartEncoder {
    pub fn new(
        b: &mut Builder,
        in_c: usize,
        hidden: usize,
        layout: &PartLayout,
        policy: StripPolicy,
    ) -> Result<Self> {
        let branches = layout
            .branches
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                BranchHead::new(
                    &mut b.sub(&format!("branch{i}")),
                    in_c,
                    hidden,
                    layout.per_part_dim,
                    n,
                )
            })
            .collect::<Result<_>>()?;
        Ok(PartEncoder {
            branches,
            layout: layout.clone(),
            policy,
        })
    }

    pub fn forward(&self, fmap: &Tensor, ctx: &mut Ctx) -> Result<PartFeatureSet> {
        let mut parts = Vec::with_capacity(self.layout.num_parts());
        for head in &self.branches {
            parts.extend(head.forward(fmap, self.policy, ctx)?);
        }
        PartFeatureSet::new(parts, self.layout.clone())
    }
}

/// Identity-related encoder E_R.
pub struct RelatedEncoder {
    store: ParamStore,
    encoder: PartEncoder,
}

impl RelatedEncoder {
    pub fn new(cfg: &ModelConfig, in_c: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let encoder = {
            let mut b = Builder::new(&mut store, rng, cfg.precision.dtype());
            PartEncoder::new(&mut b, in_c, cfg.head_channels, &cfg.layout, cfg.strip_policy)?
        };
        Ok(RelatedEncoder { store, encoder })
    }

    pub fn forward(&self, fmap: &Tensor, ctx: &mut Ctx) -> Result<PartFeatureSet> {
        self.encoder.forward(fmap, ctx)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}

/// Per-part mean and clamped log-variance of the KL variant.
#[derive(Clone, Debug)]
pub struct KlParams {
    pub means: Vec<Tensor>,
    pub log_vars: Vec<Tensor>,
}

/// Output of the identity-unrelated encoder.
#[derive(Clone, Debug)]
pub struct UnrelatedOutput {
    pub features: PartFeatureSet,
    pub kl: Option<KlParams>,
}

/// Identity-unrelated encoder E_U, optionally with reparameterised sampling.
pub struct UnrelatedEncoder {
    store: ParamStore,
    encoder: PartEncoder,
    kl_heads: Option<Vec<(Linear, Linear)>>,
    logvar_clamp: f64,
}

impl UnrelatedEncoder {
    pub fn new(cfg: &ModelConfig, in_c: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let (encoder, kl_heads) = {
            let mut b = Builder::new(&mut store, rng, cfg.precision.dtype());
            let encoder = PartEncoder::new(
                &mut b.sub("parts"),
                in_c,
                cfg.head_channels,
                &cfg.layout,
                cfg.strip_policy,
            )?;
            let kl_heads = match cfg.variant {
                super::Variant::Dc => None,
                super::Variant::Kl => {
                    let p = cfg.layout.per_part_dim;
                    let heads = (0..cfg.layout.num_parts())
                        .map(|k| {
                            let mut hb = b.sub(&format!("kl{k}"));
                            Ok((
                                Linear::new(&mut hb.sub("mean"), p, p, true)?,
                                Linear::new(&mut hb.sub("log_var"), p, p, true)?,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(heads)
                }
            };
            (encoder, kl_heads)
        };
        Ok(UnrelatedEncoder {
            store,
            encoder,
            kl_heads,
            logvar_clamp: cfg.logvar_clamp,
        })
    }

    /// In eval mode (or without a random stream) the KL sample collapses to its mean.
    pub fn forward(&self, fmap: &Tensor, ctx: &mut Ctx) -> Result<UnrelatedOutput> {
        let base = self.encoder.forward(fmap, ctx)?;
        let Some(heads) = &self.kl_heads else {
            return Ok(UnrelatedOutput {
                features: base,
                kl: None,
            });
        };
        let mut means = Vec::with_capacity(heads.len());
        let mut log_vars = Vec::with_capacity(heads.len());
        let mut samples = Vec::with_capacity(heads.len());
        for ((mean_fc, lv_fc), h) in heads.iter().zip(&base.parts) {
            let mu = mean_fc.forward(h)?;
            let lv = lv_fc
                .forward(h)?
                .clamp(-self.logvar_clamp, self.logvar_clamp)?;
            let sample = match (ctx.is_train(), ctx.rng()) {
                (true, Some(rng)) => {
                    let eps: Vec<f64> = (0..mu.elem_count())
                        .map(|_| StandardNormal.sample(&mut *rng))
                        .collect();
                    let eps = tensor_from_f64(eps, mu.dims(), mu.dtype())?;
                    (&mu + (lv.affine(0.5, 0.0)?.exp()? * eps)?)?
                }
                _ => mu.clone(),
            };
            means.push(mu);
            log_vars.push(lv);
            samples.push(sample);
        }
        Ok(UnrelatedOutput {
            features: PartFeatureSet::new(samples, base.layout.clone())?,
            kl: Some(KlParams { means, log_vars }),
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}

/// Per-part identity classifiers `w^k` (no bias).
pub struct ClassifierBank {
    store: ParamStore,
    heads: Vec<Linear>,
}

impl ClassifierBank {
    pub fn new(cfg: &ModelConfig, num_classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let heads = {
            let mut b = Builder::new(&mut store, rng, cfg.precision.dtype());
            (0..cfg.layout.num_parts())
                .map(|k| Linear::new(&mut b.sub(&format!("part{k}")), cfg.layout.per_part_dim, num_classes, false))
                .collect::<Result<_>>()?
        };
        Ok(ClassifierBank { store, heads })
    }

    /// One `[B, C]` logit matrix per part.
    pub fn forward(&self, phi: &PartFeatureSet) -> Result<Vec<Tensor>> {
        self.heads
            .iter()
            .zip(&phi.parts)
            .map(|(h, x)| h.forward(x))
            .collect()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}

/// Transposed-convolution generator conditioned on features, noise and label.
pub struct Generator {
    store: ParamStore,
    fc: Linear,
    bn0: BatchNorm,
    ups: Vec<ConvTranspose2d>,
    bns: Vec<BatchNorm>,
    dropouts: Vec<Option<Dropout>>,
    base: [usize; 2],
    base_channels: usize,
    feature_dim: usize,
    noise_dim: usize,
    num_classes: usize,
}

/// Number of ×2 upsampling stages from `base` to `target`, if it is a power of two.
pub fn upsampling_stages(target: [usize; 2], base: [usize; 2]) -> Result<usize> {
    let err = || {
        Error::Config(format!(
            "generator target {}x{} is not a power-of-two multiple of base {}x{}",
            target[0], target[1], base[0], base[1]
        ))
    };
    if base[0] == 0 || base[1] == 0 || target[0] % base[0] != 0 || target[1] % base[1] != 0 {
        return Err(err());
    }
    let (fh, fw) = (target[0] / base[0], target[1] / base[1]);
    if fh != fw || !fh.is_power_of_two() || fh < 2 {
        return Err(err());
    }
    Ok(fh.trailing_zeros() as usize)
}

impl Generator {
    pub fn new(cfg: &ModelConfig, num_classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let stages = upsampling_stages(cfg.input_size, cfg.generator_base)?;
        let width = |s: usize| (cfg.generator_width >> s).max(16);
        let feature_dim = cfg.layout.total_dim();
        let in_dim = feature_dim + cfg.noise_dim + num_classes;
        let base = cfg.generator_base;
        let mut store = ParamStore::new();
        let (fc, bn0, ups, bns, dropouts) = {
            let mut b = Builder::new(&mut store, rng, cfg.precision.dtype());
            let fc = Linear::new(&mut b.sub("fc"), in_dim, width(0) * base[0] * base[1], true)?;
            let bn0 = BatchNorm::new(&mut b.sub("bn0"), width(0))?;
            let mut ups = Vec::new();
            let mut bns = Vec::new();
            let mut dropouts = Vec::new();
            for s in 0..stages {
                let last = s + 1 == stages;
                let out_c = if last { 3 } else { width(s + 1) };
                ups.push(ConvTranspose2d::new(
                    &mut b.sub(&format!("up{s}")),
                    width(s),
                    out_c,
                    4,
                    2,
                    1,
                    DCGAN_INIT,
                )?);
                if !last {
                    bns.push(BatchNorm::new(&mut b.sub(&format!("bn{}", s + 1)), out_c)?);
                    dropouts.push(if s < cfg.generator_dropout_stages && cfg.generator_dropout > 0.0 {
                        Some(Dropout::new(cfg.generator_dropout)?)
                    } else {
                        None
                    });
                }
            }
            (fc, bn0, ups, bns, dropouts)
        };
        Ok(Generator {
            store,
            fc,
            bn0,
            ups,
            bns,
            dropouts,
            base,
            base_channels: width(0),
            feature_dim,
            noise_dim: cfg.noise_dim,
            num_classes,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.ups.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Returns the tanh output in `[-1, 1]`, shape `[B, 3, H, W]`.
    pub fn forward(
        &self,
        composed: &Tensor,
        noise: &Tensor,
        label_onehot: &Tensor,
        ctx: &mut Ctx,
    ) -> Result<Tensor> {
        let b = composed.dim(0)?;
        let expect = [
            (composed, self.feature_dim, "composed feature"),
            (noise, self.noise_dim, "noise"),
            (label_onehot, self.num_classes, "label one-hot"),
        ];
        for (t, d, what) in expect {
            if t.dims() != [b, d] {
                return Err(Error::InvalidArgument(format!(
                    "{what} has shape {:?}, expected [{b}, {d}]",
                    t.dims()
                )));
            }
        }
        let x = Tensor::cat(&[composed, noise, label_onehot], 1)?;
        let h = self
            .fc
            .forward(&x)?
            .reshape((b, self.base_channels, self.base[0], self.base[1]))?;
        let mut h = leaky_relu(&self.bn0.forward(&h, ctx)?, LRELU_SLOPE)?;
        let n = self.ups.len();
        for (s, up) in self.ups.iter().enumerate() {
            h = up.forward(&h)?;
            if s + 1 == n {
                h = h.tanh()?;
            } else {
                h = leaky_relu(&self.bns[s].forward(&h, ctx)?, LRELU_SLOPE)?;
                if let Some(d) = &self.dropouts[s] {
                    h = d.forward(&h, ctx)?;
                }
            }
        }
        Ok(h)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}

/// Default number of shared stride-2 trunk blocks: at most five, keeping at least 2×2.
pub fn default_trunk_blocks(size: [usize; 2]) -> usize {
    let mut n = 0;
    while n < 5 && size[0] >> (n + 1) >= 2 && size[1] >> (n + 1) >= 2 {
        n += 1;
    }
    n
}

struct DiscBlock {
    conv: Conv2d,
}

impl DiscBlock {
    fn forward(&self, x: &Tensor, frozen: bool) -> Result<Tensor> {
        let h = InstanceNorm::default().forward(&self.conv.forward_with(x, frozen)?)?;
        leaky_relu(&h, LRELU_SLOPE)
    }
}

fn trunk(b: &mut Builder, width: usize, blocks: usize) -> Result<(Vec<DiscBlock>, usize)> {
    let mut out = Vec::new();
    let mut in_c = 3;
    for i in 0..blocks {
        let c = trunk_channels(width, i);
        out.push(DiscBlock {
            conv: Conv2d::new(&mut b.sub(&format!("trunk{i}")), in_c, c, 4, 2, 1, DCGAN_INIT)?,
        });
        in_c = c;
    }
    Ok((out, in_c))
}

fn trunk_channels(width: usize, block: usize) -> usize {
    (width << block).min(width * 8)
}

fn trunk_blocks(cfg: &ModelConfig) -> Result<usize> {
    let n = cfg
        .discriminator_trunk_blocks
        .unwrap_or_else(|| default_trunk_blocks(cfg.input_size));
    let (h, w) = (cfg.input_size[0] >> n, cfg.input_size[1] >> n);
    if n == 0 || h < 2 || w < 2 || cfg.input_size[0] % (1 << n) != 0 || cfg.input_size[1] % (1 << n) != 0 {
        return Err(Error::Config(format!(
            "{n} discriminator trunk blocks do not fit input {:?}",
            cfg.input_size
        )));
    }
    Ok(n)
}

/// Patch discriminator D_D. It owns the stride-2 trunk that D_C shares, then
/// adds two stride-1 blocks and a one-channel logit map.
pub struct DomainDiscriminator {
    store: ParamStore,
    trunk: Vec<DiscBlock>,
    head: Vec<DiscBlock>,
    out: Conv2d,
}

impl DomainDiscriminator {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let blocks = trunk_blocks(cfg)?;
        let mut store = ParamStore::new();
        let (trunk, head, out) = {
            let mut b = Builder::new(&mut store, rng, cfg.precision.dtype());
            let (trunk, c) = trunk(&mut b, cfg.discriminator_width, blocks)?;
            let head = (0..2)
                .map(|i| {
                    Ok(DiscBlock {
                        conv: Conv2d::new(&mut b.sub(&format!("head{i}")), c, c, 3, 1, 1, DCGAN_INIT)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let out = Conv2d::new(&mut b.sub("out"), c, 1, 3, 1, 1, DCGAN_INIT)?;
            (trunk, head, out)
        };
        Ok(DomainDiscriminator {
            store,
            trunk,
            head,
            out,
        })
    }

    /// Spatial size of the trunk output.
    pub fn trunk_size(&self, input: [usize; 2]) -> [usize; 2] {
        let n = self.trunk.len();
        [input[0] >> n, input[1] >> n]
    }

    /// Shared trunk features of `[B, 3, H, W]` images in `[0,1]`.
    pub fn trunk_forward(&self, images: &Tensor, frozen: bool) -> Result<Tensor> {
        let mut h = centered(images)?;
        for blk in &self.trunk {
            h = blk.forward(&h, frozen)?;
        }
        Ok(h)
    }

    /// Trunk features to `[B, 1, h, w]` patch logits.
    pub fn head_forward(&self, trunk: &Tensor, frozen: bool) -> Result<Tensor> {
        let mut h = trunk.clone();
        for blk in &self.head {
            h = blk.forward(&h, frozen)?;
        }
        self.out.forward_with(&h, frozen)
    }

    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        self.head_forward(&self.trunk_forward(images, false)?, false)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}

/// Class head D_C on the shared trunk: one more stride-2 block and fully
/// connected logits.
pub struct ClassDiscriminator {
    store: ParamStore,
    extra: DiscBlock,
    fc: Linear,
}

impl ClassDiscriminator {
    pub fn new(cfg: &ModelConfig, num_classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let blocks = trunk_blocks(cfg)?;
        let (h, w) = (cfg.input_size[0] >> (blocks + 1), cfg.input_size[1] >> (blocks + 1));
        if h == 0 || w == 0 {
            return Err(Error::Config("class discriminator head collapses the map".into()));
        }
        let c = trunk_channels(cfg.discriminator_width, blocks - 1);
        let mut store = ParamStore::new();
        let (extra, fc) = {
            let mut b = Builder::new(&mut store, rng, cfg.precision.dtype());
            let extra = DiscBlock {
                conv: Conv2d::new(&mut b.sub("extra"), c, c, 4, 2, 1, DCGAN_INIT)?,
            };
            let fc = Linear::new(&mut b.sub("fc"), c * h * w, num_classes, true)?;
            (extra, fc)
        };
        Ok(ClassDiscriminator { store, extra, fc })
    }

    /// Shared trunk features to `[B, C]` class logits.
    pub fn forward(&self, trunk: &Tensor, frozen: bool) -> Result<Tensor> {
        let h = self.extra.forward(trunk, frozen)?.flatten_from(1)?;
        self.fc.forward_with(&h, frozen)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}
