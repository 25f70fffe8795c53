//! Frozen-feature linear probes: one logistic unit trained with BCE.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{shuffled_indices, ImageRecord, SyntheticFactors, CLOTHING_PALETTE};
use crate::error::{Error, Result};

/// Probe training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSpec {
    /// Fraction of samples used for training; the rest is the validation split.
    pub train_fraction: f64,
    pub epochs: usize,
    pub lr: f64,
    /// The learning rate is divided by `lr_decay` every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Standardise features with training-split statistics before fitting.
    /// Off by default: the probe sees the raw frozen features.
    pub standardize: bool,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            epochs: 10,
            lr: 1e-2,
            lr_decay: 10.0,
            decay_every: 3,
            batch_size: 64,
            momentum: 0.9,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    pub n_train: usize,
    pub n_val: usize,
    /// Fraction of positive labels in the validation split.
    pub val_prior: f64,
}

/// Binary attributes derived from synthetic factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeAttribute {
    /// Torso color in the first (warm) half of the palette.
    TorsoColor,
    /// Leg color in the first half of the palette.
    LegColor,
    /// Figure shifted left of centre.
    XOffset,
    /// Background (camera) in the first half of the background palette.
    Background,
    Occlusion,
}

impl ProbeAttribute {
    pub const ALL: [ProbeAttribute; 5] = [
        ProbeAttribute::TorsoColor,
        ProbeAttribute::LegColor,
        ProbeAttribute::XOffset,
        ProbeAttribute::Background,
        ProbeAttribute::Occlusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeAttribute::TorsoColor => "torso_color",
            ProbeAttribute::LegColor => "leg_color",
            ProbeAttribute::XOffset => "x_offset",
            ProbeAttribute::Background => "bg_color",
            ProbeAttribute::Occlusion => "occlusion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn label(self, f: &SyntheticFactors) -> bool {
        let half = (CLOTHING_PALETTE.len() / 2) as u8;
        match self {
            ProbeAttribute::TorsoColor => f.torso_color < half,
            ProbeAttribute::LegColor => f.leg_color < half,
            ProbeAttribute::XOffset => f.x_offset < 0,
            ProbeAttribute::Background => f.bg_color < 2,
            ProbeAttribute::Occlusion => f.occlusion,
        }
    }

    pub fn labels(self, records: &[ImageRecord]) -> Result<Vec<bool>> {
        records
            .iter()
            .map(|r| {
                r.factors.as_ref().map(|f| self.label(f)).ok_or_else(|| {
                    Error::Dataset(format!("record `{}` has no synthetic factors", r.source_id))
                })
            })
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Trains a logistic probe on a random `train_fraction` split and returns the
/// validation accuracy. The features themselves are never modified.
pub fn linear_probe(
    features: &[Vec<f64>],
    labels: &[bool],
    spec: &ProbeSpec,
    rng: &mut impl Rng,
) -> Result<ProbeOutcome> {
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} features for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::InvalidArgument("probe labels contain a single class".into()));
    }
    let n = features.len();
    let n_train = ((n as f64) * spec.train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidArgument(format!("cannot split {n} samples for probing")));
    }
    let dim = features[0].len();
    let order = shuffled_indices(n, rng);
    let (train, val) = order.split_at(n_train);

    let (mut mean, mut std) = (vec![0.0; dim], vec![1.0; dim]);
    if spec.standardize {
        for &i in train {
            for (m, x) in mean.iter_mut().zip(&features[i]) {
                *m += x / n_train as f64;
            }
        }
        let mut var = vec![0.0; dim];
        for &i in train {
            for d in 0..dim {
                var[d] += (features[i][d] - mean[d]).powi(2) / n_train as f64;
            }
        }
        std = var.into_iter().map(|v| v.sqrt().max(1e-8)).collect();
    }
    let x = |i: usize| -> Vec<f64> {
        features[i].iter().zip(mean.iter().zip(&std)).map(|(v, (m, s))| (v - m) / s).collect()
    };
    let y = |i: usize| if labels[i] { 1.0 } else { 0.0 };

    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let (mut vw, mut vb) = (vec![0.0; dim], 0.0);
    let mut epoch_order = train.to_vec();
    for epoch in 0..spec.epochs {
        let lr = spec.lr / spec.lr_decay.powi((epoch / spec.decay_every.max(1)) as i32);
        epoch_order = {
            let perm = shuffled_indices(epoch_order.len(), rng);
            perm.into_iter().map(|j| epoch_order[j]).collect()
        };
        for chunk in epoch_order.chunks(spec.batch_size.max(1)) {
            let (mut gw, mut gb) = (vec![0.0; dim], 0.0);
            for &i in chunk {
                let xi = x(i);
                let z: f64 = b + w.iter().zip(&xi).map(|(a, c)| a * c).sum::<f64>();
                let r = (sigmoid(z) - y(i)) / chunk.len() as f64;
                gb += r;
                for (g, v) in gw.iter_mut().zip(&xi) {
                    *g += r * v;
                }
            }
            for d in 0..dim {
                vw[d] = spec.momentum * vw[d] + gw[d];
                w[d] -= lr * vw[d];
            }
            vb = spec.momentum * vb + gb;
            b -= lr * vb;
        }
    }
    let correct = val
        .iter()
        .filter(|&&i| {
            let z: f64 = b + w.iter().zip(&x(i)).map(|(a, c)| a * c).sum::<f64>();
            (z > 0.0) == labels[i]
        })
        .count();
    Ok(ProbeOutcome {
        accuracy: correct as f64 / val.len() as f64,
        n_train,
        n_val: val.len(),
        val_prior: val.iter().filter(|&&i| labels[i]).count() as f64 / val.len() as f64,
    })
}
