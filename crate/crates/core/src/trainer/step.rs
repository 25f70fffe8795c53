//! One optimisation step per stage.

use std::collections::BTreeMap;

use candle_core::{Device, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};

use super::Trainer;
use crate::dataset::PkBatch;
use crate::disentangle::{compose, part_shuffle_rows, sample_mask};
use crate::error::Result;
use crate::losses::{
    class_loss, decorrelation_loss, domain_loss, identity_loss, identity_shuffle_loss, kl_unrelated_loss,
    part_shuffle_loss, total_loss, GanTerms, LossTerms,
};
use crate::model::{Component, PartFeatureSet, Variant};
use crate::nn::ops::{scalar_f64, tensor_from_f64};
use crate::nn::Ctx;
use crate::optim::{clip_grad_norm, Optimizer};
use crate::rng::ChaCha8Rng;
use crate::trainer::StagePlan;

/// Named scalar values produced by one step, in logging order.
pub type StepValues = Vec<(String, f64)>;

fn split_rows(t: &Tensor, parts: usize) -> Result<Vec<Tensor>> {
    let n = t.dim(0)? / parts;
    (0..parts).map(|i| Ok(t.narrow(0, i * n, n)?)).collect()
}

fn gan_terms(chunks: Vec<Tensor>) -> GanTerms<Tensor> {
    let mut it = chunks.into_iter();
    let mut next = || it.next().expect("eight chunks");
    GanTerms {
        real: [next(), next()],
        recon: [next(), next(), next(), next()],
        shuffled: [next(), next()],
    }
}

impl Trainer {
    fn apply(
        &self,
        optims: &mut BTreeMap<Component, Optimizer>,
        grads: &mut candle_core::backprop::GradStore,
        discriminators: bool,
        clip: bool,
    ) -> Result<()> {
        let selected: Vec<Component> = optims
            .keys()
            .copied()
            .filter(|c| c.is_discriminator() == discriminators)
            .collect();
        if clip {
            if let Some(max) = self.opts.train.grad_clip {
                let vars: Vec<Var> = selected.iter().flat_map(|c| optims[c].vars()).collect();
                clip_grad_norm(grads, &vars, max)?;
            }
        }
        for c in selected {
            optims.get_mut(&c).expect("selected").step(grads)?;
        }
        Ok(())
    }

    pub(super) fn step(
        &mut self,
        plan: &StagePlan,
        optims: &mut BTreeMap<Component, Optimizer>,
        x: &Tensor,
        batch: &PkBatch,
        ctx_rng: &mut ChaCha8Rng,
        aux_rng: &mut ChaCha8Rng,
    ) -> Result<StepValues> {
        let eps = self.schedule.label_smoothing;
        let labels = &batch.labels;
        if plan.stage == 1 {
            let mut ctx = Ctx::train(ctx_rng);
            let fmap = self.model.backbone_forward(x, &mut ctx)?;
            let phi_r = self.model.encode_parts(&fmap, &mut ctx)?;
            let l_r = identity_loss(&self.model.part_logits(&phi_r)?, labels, eps)?;
            let terms = LossTerms { related: Some(l_r), ..Default::default() };
            let (total, breakdown) = total_loss(&terms, &plan.weights, 1)?;
            let mut grads = total.backward()?;
            self.apply(optims, &mut grads, false, false)?;
            let mut out: StepValues = breakdown.entries.iter().map(|e| (e.0.as_str().to_string(), e.1)).collect();
            out.push(("total".into(), breakdown.total));
            return Ok(out);
        }

        let b = batch.len();
        let base_trains = plan.trains(Component::Related);
        let pos = Tensor::from_vec(batch.positives().iter().map(|&i| i as u32).collect::<Vec<_>>(), b, &Device::Cpu)?;
        let mode = self.opts.mode;
        let layout = self.model.layout().clone();
        let masks_a: Vec<_> = (0..b).map(|_| sample_mask(aux_rng, &layout, mode)).collect();
        let masks_p: Vec<_> = (0..b).map(|_| sample_mask(aux_rng, &layout, mode)).collect();
        let noise_dim = self.model.config().noise_dim;
        let noise: Vec<f64> = (0..6 * b * noise_dim).map(|_| StandardNormal.sample(aux_rng)).collect();
        let noise = tensor_from_f64(noise, &[6 * b, noise_dim], self.model.dtype())?;

        let mut ctx = Ctx::train(ctx_rng);
        let (fmap, phi_r, l_r) = if base_trains {
            let fmap = self.model.backbone_forward(x, &mut ctx)?;
            let phi_r = self.model.encode_parts(&fmap, &mut ctx)?;
            let l_r = identity_loss(&self.model.part_logits(&phi_r)?, labels, eps)?;
            (fmap, phi_r, Some(l_r))
        } else {
            let mut frozen = Ctx::eval();
            let fmap = self.model.backbone_forward(x, &mut frozen)?.detach();
            let phi_r = self.model.encode_parts(&fmap, &mut frozen)?.detach();
            (fmap, phi_r, None)
        };
        let unrelated = self.model.encode_unrelated(&fmap, &mut ctx)?;
        let phi_u = unrelated.features;

        let l_u = match self.model.config().variant {
            Variant::Kl => kl_unrelated_loss(unrelated.kl.as_ref().expect("KL variant emits parameters"))?,
            Variant::Dc => {
                let l = decorrelation_loss(&phi_r, &phi_u, &self.stats, self.opts.train.correlation_penalty)?;
                self.stats.update(&phi_r.detach(), &phi_u.detach())?;
                l
            }
        };

        let (r_a, u_a) = (&phi_r, &phi_u);
        let r_p = phi_r.select(&pos)?;
        let u_p = phi_u.select(&pos)?;
        let x_a = x;
        let x_p = x.index_select(&pos, 0)?;
        let s_a = part_shuffle_rows(r_a, &r_p, &masks_a)?;
        let s_p = part_shuffle_rows(&r_p, r_a, &masks_p)?;
        let pairs: [(&PartFeatureSet, &PartFeatureSet); 6] =
            [(r_a, u_a), (&r_p, u_a), (r_a, &u_p), (&r_p, &u_p), (&s_a, u_a), (&s_p, &u_p)];
        let composed = pairs.iter().map(|(r, u)| compose(r, u)).collect::<Result<Vec<_>>>()?;
        let composed = Tensor::cat(&composed, 0)?;
        let onehot_rows: Vec<Option<usize>> = (0..6).flat_map(|_| labels.iter().map(|&l| Some(l))).collect();
        let onehot = self.model.one_hot(&onehot_rows)?;
        let fakes = self.model.generate(&composed, &noise, &onehot, &mut ctx)?;
        let fake_chunks = split_rows(&fakes, 6)?;

        let l_s = identity_shuffle_loss(
            x_a,
            &x_p,
            &[fake_chunks[0].clone(), fake_chunks[1].clone(), fake_chunks[2].clone(), fake_chunks[3].clone()],
        )?;
        let l_ps = part_shuffle_loss(x_a, &x_p, &[fake_chunks[4].clone(), fake_chunks[5].clone()])?;

        // Discriminator step on detached generations.
        let all_detached = Tensor::cat(&[x_a, &x_p, &fakes.detach()], 0)?;
        let (patch, class) = self.model.discriminate(&all_detached, false)?;
        let dd = domain_loss(&gan_terms(split_rows(&patch, 8)?))?;
        let dc = class_loss(&gan_terms(split_rows(&class, 8)?), labels, eps)?;
        let d_total = ((dd.objective.neg()? * plan.weights.domain)? + (&dc * plan.weights.class)?)?;
        let d_objective = scalar_f64(&dd.objective)?;
        let d_class = scalar_f64(&dc)?;
        let mut d_grads = d_total.backward()?;
        self.apply(optims, &mut d_grads, true, true)?;

        // Generator-side step against the updated discriminators.
        let all_live = Tensor::cat(&[x_a, &x_p, &fakes], 0)?;
        let (patch, class) = self.model.discriminate(&all_live, true)?;
        let dd_g = domain_loss(&gan_terms(split_rows(&patch, 8)?))?;
        let l_c = class_loss(&gan_terms(split_rows(&class, 8)?), labels, eps)?;
        let terms = LossTerms {
            related: l_r,
            unrelated: Some(l_u),
            shuffle: Some(l_s),
            part_shuffle: Some(l_ps),
            domain: Some(dd_g.generator),
            class: Some(l_c),
        };
        let (total, breakdown) = total_loss(&terms, &plan.weights, plan.stage)?;
        let mut g_grads = total.backward()?;
        self.apply(optims, &mut g_grads, false, true)?;

        let mut out: StepValues = breakdown.entries.iter().map(|e| (e.0.as_str().to_string(), e.1)).collect();
        out.push(("total".into(), breakdown.total));
        out.push(("D_objective".into(), d_objective));
        out.push(("D_class".into(), d_class));
        Ok(out)
    }
}
