use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KlParams, PartFeatureSet};
use crate::nn::ops::{tensor_from_f64, to_f64_vec};

/// KL divergence of each per-part diagonal Gaussian from `N(0, I)`, summed over
/// parts and dimensions and averaged over the batch.
pub fn kl_unrelated_loss(params: &KlParams) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for (mu, lv) in params.means.iter().zip(&params.log_vars) {
        // 0.5 (μ² + e^ℓ − ℓ − 1)
        let term = ((mu.sqr()? + lv.exp()?)? - lv)?.affine(0.5, -0.5)?;
        let per_sample = term.sum(1)?.mean_all()?;
        total = Some(match total {
            Some(acc) => (acc + per_sample)?,
            None => per_sample,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("no parts".into()))
}

/// Moving mean and standard deviation of one feature stream (one part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Exponential moving statistics of `φ_R^k` and `φ_U^k` for every part `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingStats {
    pub momentum: f64,
    pub std_floor: f64,
    pub related: Vec<StreamStats>,
    pub unrelated: Vec<StreamStats>,
    pub initialized: bool,
}

impl MovingStats {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_STD_FLOOR: f64 = 1e-5;

    pub fn new(num_parts: usize, dim: usize, momentum: f64) -> Self {
        let blank = StreamStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        };
        MovingStats {
            momentum,
            std_floor: Self::DEFAULT_STD_FLOOR,
            related: vec![blank.clone(); num_parts],
            unrelated: vec![blank; num_parts],
            initialized: false,
        }
    }

    /// The first call copies the batch statistics; later calls blend them in with
    /// weight `momentum`. Standard deviations are floored.
    pub fn update(&mut self, phi_r: &PartFeatureSet, phi_u: &PartFeatureSet) -> Result<()> {
        phi_r.check_same_layout(phi_u)?;
        if phi_r.num_parts() != self.related.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} parts for stats over {}",
                phi_r.num_parts(),
                self.related.len()
            )));
        }
        let m = self.momentum;
        let init = !self.initialized;
        let floor = self.std_floor;
        for (streams, feats) in [(&mut self.related, phi_r), (&mut self.unrelated, phi_u)] {
            for (s, t) in streams.iter_mut().zip(&feats.parts) {
                let (mean, std) = batch_moments(t)?;
                if s.mean.len() != mean.len() {
                    return Err(Error::LayoutMismatch("feature dimension changed".into()));
                }
                for d in 0..mean.len() {
                    if init {
                        s.mean[d] = mean[d];
                        s.std[d] = std[d].max(floor);
                    } else {
                        s.mean[d] = (1.0 - m) * s.mean[d] + m * mean[d];
                        s.std[d] = ((1.0 - m) * s.std[d] + m * std[d]).max(floor);
                    }
                }
            }
        }
        self.initialized = true;
        Ok(())
    }
}

/// Per-dimension batch mean and Bessel-corrected standard deviation of `[B, p]`.
fn batch_moments(t: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, p) = t.dims2()?;
    let v = to_f64_vec(t)?;
    let mut mean = vec![0.0; p];
    for row in v.chunks(p) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut var = vec![0.0; p];
    for row in v.chunks(p) {
        for d in 0..p {
            var[d] += (row[d] - mean[d]).powi(2);
        }
    }
    let dof = if b > 1 { b - 1 } else { 1 } as f64;
    Ok((mean, var.into_iter().map(|s| (s / dof).sqrt()).collect()))
}

/// How the per-part correlation enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationPenalty {
    /// `Σ_k |ρ_k|`.
    #[default]
    Absolute,
    /// `Σ_k ρ_k`, the literal signed sum.
    Signed,
}

fn constant(v: &[f64], dtype: DType) -> Result<Tensor> {
    tensor_from_f64(v.to_vec(), &[1, v.len()], dtype)
}

/// `ρ_k`: mean over batch and dimensions of the product of standardised
/// features, using the moving statistics as constants.
pub fn correlation_per_part(
    phi_r: &PartFeatureSet,
    phi_u: &PartFeatureSet,
    stats: &MovingStats,
) -> Result<Vec<Tensor>> {
    phi_r.check_same_layout(phi_u)?;
    if !stats.initialized {
        return Err(Error::InvalidArgument("moving statistics are not initialised".into()));
    }
    let mut out = Vec::with_capacity(phi_r.num_parts());
    for k in 0..phi_r.num_parts() {
        let (r, u) = (&phi_r.parts[k], &phi_u.parts[k]);
        let dt = r.dtype();
        let (sr, su) = (&stats.related[k], &stats.unrelated[k]);
        let zr = r
            .broadcast_sub(&constant(&sr.mean, dt)?)?
            .broadcast_div(&constant(&sr.std, dt)?)?;
        let zu = u
            .broadcast_sub(&constant(&su.mean, dt)?)?
            .broadcast_div(&constant(&su.std, dt)?)?;
        out.push((zr * zu)?.mean_all()?);
    }
    Ok(out)
}

/// Decorrelation loss between identity-related and -unrelated features.
///
/// Returns zero while `stats` is uninitialised. Gradients flow through the
/// features only.
pub fn decorrelation_loss(
    phi_r: &PartFeatureSet,
    phi_u: &PartFeatureSet,
    stats: &MovingStats,
    penalty: CorrelationPenalty,
) -> Result<Tensor> {
    if !stats.initialized {
        return Ok(Tensor::zeros((), phi_r.parts[0].dtype(), &Device::Cpu)?);
    }
    let mut total: Option<Tensor> = None;
    for rho in correlation_per_part(phi_r, phi_u, stats)? {
        let term = match penalty {
            CorrelationPenalty::Absolute => rho.abs()?,
            CorrelationPenalty::Signed => rho,
        };
        total = Some(match total {
            Some(acc) => (acc + term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one part"))
}
