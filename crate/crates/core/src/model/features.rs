use candle_core::Tensor;

use super::PartLayout;
use crate::error::{Error, Result};

/// The K per-part vectors of one encoder pass over a batch.
///
/// `parts[k]` has shape `[B, p]`; ordering follows [`PartLayout::slots`].
#[derive(Clone, Debug)]
pub struct PartFeatureSet {
    pub parts: Vec<Tensor>,
    pub layout: PartLayout,
}

impl PartFeatureSet {
    pub fn new(parts: Vec<Tensor>, layout: PartLayout) -> Result<Self> {
        if parts.len() != layout.num_parts() {
            return Err(Error::LayoutMismatch(format!(
                "{} parts for a layout with K = {}",
                parts.len(),
                layout.num_parts()
            )));
        }
        let b = parts[0].dim(0)?;
        for t in &parts {
            if t.dims() != [b, layout.per_part_dim] {
                return Err(Error::LayoutMismatch(format!(
                    "part shape {:?}, expected [{b}, {}]",
                    t.dims(),
                    layout.per_part_dim
                )));
            }
        }
        Ok(PartFeatureSet { parts, layout })
    }

    /// Splits a `[B, K·p]` tensor back into parts.
    pub fn from_concat(t: &Tensor, layout: PartLayout) -> Result<Self> {
        let p = layout.per_part_dim;
        let parts = (0..layout.num_parts())
            .map(|k| t.narrow(1, k * p, p))
            .collect::<candle_core::Result<Vec<_>>>()?;
        Self::new(parts, layout)
    }

    pub fn batch_size(&self) -> usize {
        self.parts[0].dims()[0]
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    /// `[B, K·p]` concatenation in branch-major order.
    pub fn concat(&self) -> Result<Tensor> {
        Ok(Tensor::cat(&self.parts, 1)?)
    }

    pub fn zeros_like(&self) -> Result<Self> {
        Ok(PartFeatureSet {
            parts: self
                .parts
                .iter()
                .map(Tensor::zeros_like)
                .collect::<candle_core::Result<_>>()?,
            layout: self.layout.clone(),
        })
    }

    pub fn detach(&self) -> Self {
        PartFeatureSet {
            parts: self.parts.iter().map(Tensor::detach).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Gathers batch rows.
    pub fn select(&self, rows: &Tensor) -> Result<Self> {
        Ok(PartFeatureSet {
            parts: self
                .parts
                .iter()
                .map(|t| t.index_select(rows, 0))
                .collect::<candle_core::Result<_>>()?,
            layout: self.layout.clone(),
        })
    }

    /// Stacks several sets along the batch dimension.
    pub fn cat_batch(sets: &[&PartFeatureSet]) -> Result<Self> {
        let layout = sets
            .first()
            .ok_or_else(|| Error::InvalidArgument("no feature sets to stack".into()))?
            .layout
            .clone();
        let mut parts = Vec::with_capacity(layout.num_parts());
        for k in 0..layout.num_parts() {
            let col: Vec<&Tensor> = sets.iter().map(|s| &s.parts[k]).collect();
            parts.push(Tensor::cat(&col, 0)?);
        }
        Self::new(parts, layout)
    }

    /// Linear interpolation `(1-α)·self + α·other`.
    pub fn lerp(&self, other: &Self, alpha: f64) -> Result<Self> {
        self.check_same_layout(other)?;
        let parts = self
            .parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| (a * (1.0 - alpha))? + (b * alpha)?)
            .collect::<candle_core::Result<_>>()?;
        Ok(PartFeatureSet {
            parts,
            layout: self.layout.clone(),
        })
    }

    pub fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{:?} vs {:?}",
                self.layout, other.layout
            )));
        }
        if self.batch_size() != other.batch_size() {
            return Err(Error::LayoutMismatch(format!(
                "batch {} vs {}",
                self.batch_size(),
                other.batch_size()
            )));
        }
        Ok(())
    }
}
