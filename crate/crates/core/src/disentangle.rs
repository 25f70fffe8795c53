//! Identity-shuffling composition and the region-wise part shuffling operator.

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PartFeatureSet, PartKind, PartLayout};

/// Short-term (clothing stable) or long-term (clothing may change) re-identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReidMode {
    #[default]
    ShortTerm,
    /// Lower-body strips (the last strip of every multi-strip branch) are never shuffled.
    LongTerm,
}

/// Indices of the part vectors that the shuffling operator may swap.
///
/// Only local (strip) features are shuffleable; globals never are.
pub fn shuffle_registry(layout: &PartLayout, mode: ReidMode) -> Vec<usize> {
    layout
        .slots()
        .into_iter()
        .enumerate()
        .filter_map(|(k, slot)| match slot.kind {
            PartKind::Global => None,
            PartKind::Local(i) if mode == ReidMode::LongTerm && i + 1 == slot.strips => None,
            PartKind::Local(_) => Some(k),
        })
        .collect()
}

/// Boolean selection over the shuffleable units of a layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleMask {
    bits: Vec<bool>,
    registry: Vec<usize>,
}

impl ShuffleMask {
    pub fn new(layout: &PartLayout, mode: ReidMode, bits: Vec<bool>) -> Result<Self> {
        let registry = shuffle_registry(layout, mode);
        if bits.len() != registry.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} mask bits for {} shuffleable units",
                bits.len(),
                registry.len()
            )));
        }
        Ok(ShuffleMask { bits, registry })
    }

    pub fn filled(layout: &PartLayout, mode: ReidMode, value: bool) -> Self {
        let registry = shuffle_registry(layout, mode);
        ShuffleMask {
            bits: vec![value; registry.len()],
            registry,
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Part indices of the shuffleable units, aligned with [`Self::bits`].
    pub fn registry(&self) -> &[usize] {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Negates every bit on the registry.
    pub fn complement(&self) -> Self {
        ShuffleMask {
            bits: self.bits.iter().map(|b| !b).collect(),
            registry: self.registry.clone(),
        }
    }

    /// Whether part `k` is taken from the second operand.
    pub fn swaps(&self, k: usize) -> bool {
        self.registry
            .iter()
            .position(|&r| r == k)
            .is_some_and(|i| self.bits[i])
    }
}

/// Draws each registry bit from Bernoulli(0.5), rejecting the all-false mask.
pub fn sample_mask<R: Rng + ?Sized>(rng: &mut R, layout: &PartLayout, mode: ReidMode) -> ShuffleMask {
    let registry = shuffle_registry(layout, mode);
    if registry.is_empty() {
        return ShuffleMask {
            bits: Vec::new(),
            registry,
        };
    }
    loop {
        let bits: Vec<bool> = (0..registry.len()).map(|_| rng.random_bool(0.5)).collect();
        if bits.iter().any(|&b| b) {
            return ShuffleMask { bits, registry };
        }
    }
}

/// Part-wise element-wise addition `φ_R ⊕ φ_U`.
pub fn compose_parts(phi_r: &PartFeatureSet, phi_u: &PartFeatureSet) -> Result<PartFeatureSet> {
    phi_r.check_same_layout(phi_u)?;
    let parts = phi_r
        .parts
        .iter()
        .zip(&phi_u.parts)
        .map(|(a, b)| a + b)
        .collect::<candle_core::Result<_>>()?;
    PartFeatureSet::new(parts, phi_r.layout.clone())
}

/// `φ_R ⊕ φ_U` concatenated to `[B, K·p]`.
pub fn compose(phi_r: &PartFeatureSet, phi_u: &PartFeatureSet) -> Result<Tensor> {
    compose_parts(phi_r, phi_u)?.concat()
}

/// Applies one mask to every batch row: unit `u` comes from `phi_j` when its
/// bit is set, everything else (globals included) from `phi_i`.
pub fn part_shuffle(
    phi_i: &PartFeatureSet,
    phi_j: &PartFeatureSet,
    mask: &ShuffleMask,
) -> Result<PartFeatureSet> {
    phi_i.check_same_layout(phi_j)?;
    check_registry(&phi_i.layout, mask)?;
    let parts = (0..phi_i.num_parts())
        .map(|k| {
            if mask.swaps(k) {
                phi_j.parts[k].clone()
            } else {
                phi_i.parts[k].clone()
            }
        })
        .collect();
    PartFeatureSet::new(parts, phi_i.layout.clone())
}

/// Row-wise variant: `masks[b]` applies to batch row `b`.
pub fn part_shuffle_rows(
    phi_i: &PartFeatureSet,
    phi_j: &PartFeatureSet,
    masks: &[ShuffleMask],
) -> Result<PartFeatureSet> {
    phi_i.check_same_layout(phi_j)?;
    let b = phi_i.batch_size();
    if masks.len() != b {
        return Err(Error::LayoutMismatch(format!(
            "{} masks for a batch of {b}",
            masks.len()
        )));
    }
    for m in masks {
        check_registry(&phi_i.layout, m)?;
    }
    let p = phi_i.layout.per_part_dim;
    let mut parts = Vec::with_capacity(phi_i.num_parts());
    for k in 0..phi_i.num_parts() {
        let sel: Vec<u8> = masks.iter().map(|m| u8::from(m.swaps(k))).collect();
        let part = if sel.iter().all(|&s| s == 0) {
            phi_i.parts[k].clone()
        } else if sel.iter().all(|&s| s == 1) {
            phi_j.parts[k].clone()
        } else {
            let cond = Tensor::from_vec(sel, (b, 1), &Device::Cpu)?
                .broadcast_as((b, p))?
                .contiguous()?;
            cond.where_cond(&phi_j.parts[k], &phi_i.parts[k])?
        };
        parts.push(part);
    }
    PartFeatureSet::new(parts, phi_i.layout.clone())
}

fn check_registry(layout: &PartLayout, mask: &ShuffleMask) -> Result<()> {
    let short = shuffle_registry(layout, ReidMode::ShortTerm);
    let long = shuffle_registry(layout, ReidMode::LongTerm);
    if mask.registry != short && mask.registry != long {
        return Err(Error::LayoutMismatch(
            "shuffle mask registry does not belong to this layout".into(),
        ));
    }
    Ok(())
}

/// All-zero features for a layout.
pub fn zeros_features(layout: &PartLayout, batch: usize, dtype: DType) -> Result<PartFeatureSet> {
    let parts = (0..layout.num_parts())
        .map(|_| Tensor::zeros((batch, layout.per_part_dim), dtype, &Device::Cpu))
        .collect::<candle_core::Result<_>>()?;
    PartFeatureSet::new(parts, layout.clone())
}
