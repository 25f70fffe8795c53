use candle_core::Tensor;

use super::GanTerms;
use crate::error::{Error, Result};
use crate::nn::ops::sigmoid;

const PROB_EPS: f64 = 1e-7;

/// Both sides of the domain loss.
#[derive(Debug, Clone)]
pub struct DomainLoss {
    /// The log-likelihood the domain discriminator maximises (always ≤ 0).
    pub objective: Tensor,
    /// Non-saturating generator term `-Σ log D(fake)` (≥ 0).
    pub generator: Tensor,
}

/// Patch logits `[B, 1, h, w]` to one probability per image, `[B]`.
fn image_probability(patch_logits: &Tensor) -> Result<Tensor> {
    let p = sigmoid(patch_logits)?.flatten_from(1)?.mean(1)?;
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS)?)
}

/// Domain loss from the patch logits of two real and six generated images.
pub fn domain_loss(patch_logits: &GanTerms<Tensor>) -> Result<DomainLoss> {
    let b = patch_logits.real[0].dim(0)?;
    for t in patch_logits.all() {
        if t.dim(0)? != b {
            return Err(Error::InvalidArgument(format!(
                "image-count mismatch: {} vs {b}",
                t.dim(0)?
            )));
        }
    }
    let probs = patch_logits.try_map(image_probability)?;
    let mut objective = (probs.real[0].log()? + probs.real[1].log()?)?;
    let mut generator: Option<Tensor> = None;
    for q in probs.fakes() {
        objective = (objective + q.affine(-1.0, 1.0)?.log()?)?;
        let g = q.log()?.neg()?;
        generator = Some(match generator {
            Some(acc) => (acc + g)?,
            None => g,
        });
    }
    Ok(DomainLoss {
        objective: objective.mean_all()?,
        generator: generator.expect("six fakes").mean_all()?,
    })
}
