use candle_core::{DType, Tensor};

use super::GanTerms;
use crate::error::{Error, Result};
use crate::nn::ops::{log_softmax, tensor_from_f64};

/// Softmax probability of class `c`, computed with max subtraction.
pub fn softmax_prob(logits: &[f64], c: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    (logits[c] - m).exp() / z
}

/// `[B, C]` targets: `1-ε` on the label and `ε/(C-1)` elsewhere.
pub fn smoothed_targets(labels: &[usize], classes: usize, smoothing: f64, dtype: DType) -> Result<Tensor> {
    let off = if classes > 1 {
        smoothing / (classes - 1) as f64
    } else {
        0.0
    };
    let on = if classes > 1 { 1.0 - smoothing } else { 1.0 };
    let mut v = vec![off; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::InvalidLabel {
                label: y,
                classes,
            });
        }
        v[i * classes + y] = on;
    }
    tensor_from_f64(v, &[labels.len(), classes], dtype)
}

/// Batch-mean cross-entropy between `[B, C]` logits and `[B, C]` target distributions.
pub fn cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let lp = log_softmax(logits)?;
    Ok((lp * targets)?.sum(1)?.neg()?.mean_all()?)
}

fn summed_ce<'a>(
    logits: impl Iterator<Item = &'a Tensor>,
    labels: &[usize],
    smoothing: f64,
) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    let mut targets: Option<Tensor> = None;
    for l in logits {
        let (b, c) = l.dims2()?;
        if b != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{b} logit rows for {} labels",
                labels.len()
            )));
        }
        let t = match &targets {
            Some(t) => t.clone(),
            None => {
                let t = smoothed_targets(labels, c, smoothing, l.dtype())?;
                targets = Some(t.clone());
                t
            }
        };
        let ce = cross_entropy(l, &t)?;
        total = Some(match total {
            Some(acc) => (acc + ce)?,
            None => ce,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("no logits".into()))
}

/// Identity classification loss: cross-entropy summed over the K parts,
/// averaged over the batch.
pub fn identity_loss(part_logits: &[Tensor], labels: &[usize], smoothing: f64) -> Result<Tensor> {
    summed_ce(part_logits.iter(), labels, smoothing)
}

/// Class loss: cross-entropy of the class discriminator on two real and six
/// generated images, all targeting the pair's shared identity.
pub fn class_loss(logits: &GanTerms<Tensor>, labels: &[usize], smoothing: f64) -> Result<Tensor> {
    summed_ce(logits.all(), labels, smoothing)
}
