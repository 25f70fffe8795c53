//! Model components and the bundle that owns them.

mod features;
mod layout;
mod network;

use std::collections::BTreeMap;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

pub use features::PartFeatureSet;
pub use layout::{strip_windows, PartKind, PartLayout, PartSlot, StripPolicy};
pub use network::{
    default_trunk_blocks, upsampling_stages, Backbone, ClassDiscriminator, ClassifierBank,
    DomainDiscriminator, Generator, KlParams, PartEncoder, RelatedEncoder, ToyBackbone,
    UnrelatedEncoder, UnrelatedOutput,
};

use crate::error::{Error, Result};
use crate::nn::ops::tensor_from_f64;
use crate::nn::{Ctx, ParamStore};
use crate::rng::{self, tag};

/// Identity-unrelated regulariser family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Variant {
    /// Reparameterised features with a KL prior.
    #[serde(rename = "KL")]
    Kl,
    /// Deterministic features with the decorrelation loss.
    #[default]
    #[serde(rename = "DC")]
    Dc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Architecture hyper-parameters. The default is the desk-scale 64×32 model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Set from the run configuration's top-level `variant`.
    #[serde(skip)]
    pub variant: Variant,
    pub layout: PartLayout,
    pub strip_policy: StripPolicy,
    /// `[H, W]` of network inputs and generator outputs.
    pub input_size: [usize; 2],
    pub backbone_channels: Vec<usize>,
    pub backbone_strides: Vec<usize>,
    pub head_channels: usize,
    pub noise_dim: usize,
    pub generator_base: [usize; 2],
    pub generator_width: usize,
    pub generator_dropout: f64,
    pub generator_dropout_stages: usize,
    pub discriminator_width: usize,
    pub discriminator_trunk_blocks: Option<usize>,
    pub logvar_clamp: f64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Dc,
            layout: PartLayout::default(),
            strip_policy: StripPolicy::Adaptive,
            input_size: [64, 32],
            backbone_channels: vec![16, 32, 64, 64],
            backbone_strides: vec![2, 2, 2, 1],
            head_channels: 64,
            noise_dim: 128,
            generator_base: [2, 1],
            generator_width: 128,
            generator_dropout: 0.5,
            generator_dropout_stages: 3,
            discriminator_width: 16,
            discriminator_trunk_blocks: None,
            logvar_clamp: 8.0,
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    /// Full-resolution 384×128 geometry (six generator stages, 12×4 patch trunk).
    pub fn full_scale() -> Self {
        ModelConfig {
            strip_policy: StripPolicy::Exact,
            input_size: [384, 128],
            backbone_channels: vec![64, 128, 256, 512],
            head_channels: 256,
            generator_base: [6, 2],
            generator_width: 512,
            discriminator_width: 64,
            ..Default::default()
        }
    }
}

/// Names of the independently frozen / optimised parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "backbone")]
    Backbone,
    #[serde(rename = "E_R")]
    Related,
    #[serde(rename = "classifier")]
    Classifier,
    #[serde(rename = "E_U")]
    Unrelated,
    #[serde(rename = "G")]
    Generator,
    #[serde(rename = "D_D")]
    DomainDisc,
    #[serde(rename = "D_C")]
    ClassDisc,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Backbone,
        Component::Related,
        Component::Classifier,
        Component::Unrelated,
        Component::Generator,
        Component::DomainDisc,
        Component::ClassDisc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Backbone => "backbone",
            Component::Related => "E_R",
            Component::Classifier => "classifier",
            Component::Unrelated => "E_U",
            Component::Generator => "G",
            Component::DomainDisc => "D_D",
            Component::ClassDisc => "D_C",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn is_discriminator(self) -> bool {
        matches!(self, Component::DomainDisc | Component::ClassDisc)
    }
}

/// All five learnable components (plus backbone and classifier bank).
pub struct ModelBundle {
    config: ModelConfig,
    num_classes: usize,
    pub backbone: Box<dyn Backbone>,
    pub related: RelatedEncoder,
    pub classifier: ClassifierBank,
    pub unrelated: UnrelatedEncoder,
    pub generator: Generator,
    pub domain_disc: DomainDiscriminator,
    pub class_disc: ClassDiscriminator,
}

impl ModelBundle {
    /// Builds a model with the configured toy backbone; initialisation is a
    /// pure function of `seed`.
    pub fn new(config: ModelConfig, num_classes: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, &[tag::INIT, 0]);
        let backbone = ToyBackbone::new(
            &config.backbone_channels,
            &config.backbone_strides,
            &mut r,
            config.precision.dtype(),
        )?;
        Self::with_backbone(config, num_classes, seed, Box::new(backbone))
    }

    /// Builds the heads on top of an arbitrary feature extractor.
    pub fn with_backbone(
        config: ModelConfig,
        num_classes: usize,
        seed: u64,
        backbone: Box<dyn Backbone>,
    ) -> Result<Self> {
        config.layout.validate()?;
        if num_classes == 0 {
            return Err(Error::Config("model needs at least one class".into()));
        }
        let [h, w] = config.input_size;
        let (fh, _) = backbone.output_size(h, w);
        for &n in &config.layout.branches {
            strip_windows(fh, n, config.strip_policy)?;
        }
        let in_c = backbone.out_channels();
        let stream = |i: u64| rng::stream(seed, &[tag::INIT, i]);
        Ok(ModelBundle {
            related: RelatedEncoder::new(&config, in_c, &mut stream(1))?,
            classifier: ClassifierBank::new(&config, num_classes, &mut stream(2))?,
            unrelated: UnrelatedEncoder::new(&config, in_c, &mut stream(3))?,
            generator: Generator::new(&config, num_classes, &mut stream(4))?,
            domain_disc: DomainDiscriminator::new(&config, &mut stream(5))?,
            class_disc: ClassDiscriminator::new(&config, num_classes, &mut stream(6))?,
            backbone,
            config,
            num_classes,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layout(&self) -> &PartLayout {
        &self.config.layout
    }

    pub fn dtype(&self) -> DType {
        self.config.precision.dtype()
    }

    pub fn store(&self, c: Component) -> &ParamStore {
        match c {
            Component::Backbone => self.backbone.store(),
            Component::Related => self.related.store(),
            Component::Classifier => self.classifier.store(),
            Component::Unrelated => self.unrelated.store(),
            Component::Generator => self.generator.store(),
            Component::DomainDisc => self.domain_disc.store(),
            Component::ClassDisc => self.class_disc.store(),
        }
    }

    /// Per-component SHA-256 of parameters and buffers.
    pub fn digests(&self) -> Result<BTreeMap<Component, [u8; 32]>> {
        Component::ALL
            .into_iter()
            .map(|c| Ok((c, self.store(c).digest()?)))
            .collect()
    }

    /// Every parameter and buffer keyed `param.<component>.<name>` /
    /// `buffer.<component>.<name>`.
    pub fn named_state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for c in Component::ALL {
            for (k, t) in self.store(c).named_tensors() {
                let (kind, rest) = k.split_once('.').expect("kind prefix");
                out.push((format!("{kind}.{}.{rest}", c.name()), t));
            }
        }
        out
    }

    /// Inverse of [`named_state`](Self::named_state).
    pub fn load_state(&self, lookup: &dyn Fn(&str) -> Option<Tensor>) -> Result<()> {
        for c in Component::ALL {
            self.store(c).load_from(|k| {
                let (kind, rest) = k.split_once('.')?;
                lookup(&format!("{kind}.{}.{rest}", c.name()))
            })?;
        }
        Ok(())
    }

    pub fn backbone_forward(&self, images: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        self.backbone.forward(images, ctx)
    }

    pub fn encode_parts(&self, fmap: &Tensor, ctx: &mut Ctx) -> Result<PartFeatureSet> {
        self.related.forward(fmap, ctx)
    }

    pub fn encode_unrelated(&self, fmap: &Tensor, ctx: &mut Ctx) -> Result<UnrelatedOutput> {
        self.unrelated.forward(fmap, ctx)
    }

    pub fn part_logits(&self, phi_r: &PartFeatureSet) -> Result<Vec<Tensor>> {
        self.classifier.forward(phi_r)
    }

    /// Generator output mapped to `[0,1]`.
    pub fn generate(
        &self,
        composed: &Tensor,
        noise: &Tensor,
        label_onehot: &Tensor,
        ctx: &mut Ctx,
    ) -> Result<Tensor> {
        let raw = self.generator.forward(composed, noise, label_onehot, ctx)?;
        Ok(raw.affine(0.5, 0.5)?)
    }

    pub fn discriminate_domain(&self, images: &Tensor) -> Result<Tensor> {
        self.domain_disc.forward(images)
    }

    pub fn discriminate_class(&self, images: &Tensor) -> Result<Tensor> {
        self.class_disc.forward(&self.domain_disc.trunk_forward(images, false)?, false)
    }

    /// Patch logits and class logits from one pass of the shared trunk.
    /// `frozen` keeps gradients away from discriminator parameters.
    pub fn discriminate(&self, images: &Tensor, frozen: bool) -> Result<(Tensor, Tensor)> {
        let t = self.domain_disc.trunk_forward(images, frozen)?;
        Ok((self.domain_disc.head_forward(&t, frozen)?, self.class_disc.forward(&t, frozen)?))
    }

    /// Concatenated identity-related features in inference mode, `[B, K·p]`.
    pub fn extract_related(&self, images: &Tensor) -> Result<Tensor> {
        let mut ctx = Ctx::eval();
        let fmap = self.backbone_forward(images, &mut ctx)?;
        self.encode_parts(&fmap, &mut ctx)?.concat()
    }

    /// Concatenated identity-unrelated features (KL mean) in inference mode.
    pub fn extract_unrelated(&self, images: &Tensor) -> Result<Tensor> {
        let mut ctx = Ctx::eval();
        let fmap = self.backbone_forward(images, &mut ctx)?;
        self.encode_unrelated(&fmap, &mut ctx)?.features.concat()
    }

    /// `[B, C]` one-hot rows; `None` labels give all-zero rows (label-free generation).
    pub fn one_hot(&self, labels: &[Option<usize>]) -> Result<Tensor> {
        let c = self.num_classes;
        let mut v = vec![0.0; labels.len() * c];
        for (i, l) in labels.iter().enumerate() {
            if let Some(l) = *l {
                if l >= c {
                    return Err(Error::InvalidLabel { label: l, classes: c });
                }
                v[i * c + l] = 1.0;
            }
        }
        tensor_from_f64(v, &[labels.len(), c], self.dtype())
    }

    pub fn zero_noise(&self, batch: usize) -> Result<Tensor> {
        Ok(Tensor::zeros(
            (batch, self.config.noise_dim),
            self.dtype(),
            &candle_core::Device::Cpu,
        )?)
    }
}
