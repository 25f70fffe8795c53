//! Stage plans and the per-epoch learning-rate schedule.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::disentangle::ReidMode;
use crate::error::{Error, Result};
use crate::losses::{LossName, LossWeights};
use crate::model::{Component, Variant};
use crate::optim::OptimizerSpec;

/// Full-length epoch counts, or the same divided by `factor` (floor 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanScale {
    Full,
    Toy { factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    pub epochs: usize,
    pub lr: f64,
    pub frozen: BTreeSet<Component>,
    pub active_losses: Vec<LossName>,
    pub optimizers: BTreeMap<Component, OptimizerSpec>,
    /// Loss weights with the stage's `lambda_U` already resolved.
    pub weights: LossWeights,
}

impl StagePlan {
    pub fn new(stage: u8, epochs: usize, lr: f64, weights: &LossWeights) -> Result<Self> {
        let frozen: BTreeSet<Component> = match stage {
            1 => [Component::Unrelated, Component::Generator, Component::DomainDisc, Component::ClassDisc].into(),
            2 => [Component::Backbone, Component::Related, Component::Classifier].into(),
            3 => BTreeSet::new(),
            _ => return Err(Error::Config(format!("stage {stage} not in 1..=3"))),
        };
        let optimizers = Component::ALL
            .into_iter()
            .filter(|c| !frozen.contains(c))
            .map(|c| {
                let spec = if c.is_discriminator() { OptimizerSpec::sgd_momentum() } else { OptimizerSpec::adam() };
                (c, spec)
            })
            .collect();
        let mut resolved = weights.clone();
        resolved.unrelated = weights.get(LossName::Unrelated, stage);
        resolved.unrelated_schedule = None;
        Ok(Self {
            stage,
            epochs,
            lr,
            frozen,
            active_losses: LossName::ALL.into_iter().filter(|l| l.active_in(stage)).collect(),
            optimizers,
            weights: resolved,
        })
    }

    pub fn trains(&self, c: Component) -> bool {
        !self.frozen.contains(&c)
    }
}

pub const FULL_EPOCHS: [usize; 3] = [300, 200, 200];
pub const LONG_TERM_EPOCHS: [usize; 3] = [50, 200, 50];
pub const FULL_LR: [f64; 3] = [2e-4, 2e-4, 2e-5];

pub fn scaled_epochs(epochs: [usize; 3], scale: PlanScale) -> [usize; 3] {
    match scale {
        PlanScale::Full => epochs,
        PlanScale::Toy { factor } => epochs.map(|e| (e / factor.max(1)).max(3)),
    }
}

/// The three-stage schedule with the variant's default loss weights.
pub fn build_default_plan(variant: Variant, mode: ReidMode, scale: PlanScale) -> Vec<StagePlan> {
    let base = match mode {
        ReidMode::ShortTerm => FULL_EPOCHS,
        ReidMode::LongTerm => LONG_TERM_EPOCHS,
    };
    build_plan(scaled_epochs(base, scale), FULL_LR, &LossWeights::for_variant(variant))
        .expect("default weights are valid")
}

pub fn build_plan(epochs: [usize; 3], lr: [f64; 3], weights: &LossWeights) -> Result<Vec<StagePlan>> {
    weights.validate()?;
    (0..3).map(|i| StagePlan::new(i as u8 + 1, epochs[i], lr[i], weights)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub warmup_epochs: usize,
    /// `lr_min = base_lr · lr_min_ratio`; warmup also starts from `lr_min`.
    pub lr_min_ratio: f64,
    /// Label smoothing for the identity and class losses; 0 disables it.
    pub label_smoothing: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { warmup_epochs: 1, lr_min_ratio: 0.01, label_smoothing: 0.1 }
    }
}

impl ScheduleSpec {
    pub fn for_scale(scale: PlanScale) -> Self {
        let warmup_epochs = match scale {
            PlanScale::Full => 10,
            PlanScale::Toy { .. } => 1,
        };
        Self { warmup_epochs, ..Self::default() }
    }

    pub fn validate(&self, epochs: usize) -> Result<()> {
        if self.warmup_epochs >= epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be below the stage length ({epochs})",
                self.warmup_epochs
            )));
        }
        if !(0.0..=1.0).contains(&self.lr_min_ratio) || !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config("lr_min_ratio or label_smoothing out of range".into()));
        }
        Ok(())
    }
}

/// Linear warmup from `lr_min` to `base_lr`, then cosine decay reaching
/// `lr_min` at the last epoch (`epochs - 1`).
pub fn lr_at(schedule: &ScheduleSpec, epoch: usize, epochs: usize, base_lr: f64) -> f64 {
    let lr_min = base_lr * schedule.lr_min_ratio;
    let w = schedule.warmup_epochs;
    if epoch < w {
        return lr_min + (base_lr - lr_min) * epoch as f64 / w as f64;
    }
    let span = epochs.saturating_sub(1).saturating_sub(w);
    if span == 0 {
        return base_lr;
    }
    let t = ((epoch - w) as f64 / span as f64).min(1.0);
    lr_min + 0.5 * (base_lr - lr_min) * (1.0 + (PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_length_plans() {
        let p = build_default_plan(Variant::Kl, ReidMode::ShortTerm, PlanScale::Full);
        assert_eq!(p.iter().map(|s| s.epochs).collect::<Vec<_>>(), vec![300, 200, 200]);
        assert_eq!(p.iter().map(|s| s.lr).collect::<Vec<_>>(), vec![2e-4, 2e-4, 2e-5]);
        assert_eq!(p.iter().map(|s| s.weights.unrelated).collect::<Vec<_>>(), vec![0.0, 1e-3, 1e-2]);
        let p = build_default_plan(Variant::Dc, ReidMode::LongTerm, PlanScale::Full);
        assert_eq!(p.iter().map(|s| s.epochs).collect::<Vec<_>>(), vec![50, 200, 50]);
        assert!(p.iter().all(|s| s.weights.unrelated == 1.0));
        let p = build_default_plan(Variant::Dc, ReidMode::ShortTerm, PlanScale::Toy { factor: 50 });
        assert_eq!(p.iter().map(|s| s.epochs).collect::<Vec<_>>(), vec![6, 4, 4]);
    }

    #[test]
    fn freeze_sets_and_optimizers() {
        let p = build_default_plan(Variant::Dc, ReidMode::ShortTerm, PlanScale::Full);
        assert!(p[0].trains(Component::Related) && !p[0].trains(Component::Generator));
        assert!(!p[1].trains(Component::Related) && p[1].trains(Component::ClassDisc));
        assert!(p[2].frozen.is_empty());
        for s in &p {
            for (c, o) in &s.optimizers {
                assert_eq!(o.is_sgd(), c.is_discriminator());
            }
        }
        assert_eq!(p[0].active_losses, vec![LossName::Related]);
    }

    #[test]
    fn schedule_endpoints() {
        let s = ScheduleSpec { warmup_epochs: 10, ..ScheduleSpec::default() };
        assert!((lr_at(&s, 0, 300, 2e-4) - 2e-6).abs() < 1e-18);
        assert_eq!(lr_at(&s, 10, 300, 2e-4), 2e-4);
        assert!((lr_at(&s, 299, 300, 2e-4) - 2e-6).abs() < 1e-12);
    }
}
