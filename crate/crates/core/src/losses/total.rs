use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Variant;
use crate::nn::ops::scalar_f64;

/// The six weighted objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossName {
    Related,
    Unrelated,
    Shuffle,
    PartShuffle,
    Domain,
    Class,
}

impl LossName {
    pub const ALL: [LossName; 6] = [
        LossName::Related,
        LossName::Unrelated,
        LossName::Shuffle,
        LossName::PartShuffle,
        LossName::Domain,
        LossName::Class,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossName::Related => "L_R",
            LossName::Unrelated => "L_U",
            LossName::Shuffle => "L_S",
            LossName::PartShuffle => "L_PS",
            LossName::Domain => "L_D",
            LossName::Class => "L_C",
        }
    }

    /// Stage 1 trains the identity loss alone; stage 2 everything else; stage 3 all.
    pub fn active_in(self, stage: u8) -> bool {
        match stage {
            1 => self == LossName::Related,
            2 => self != LossName::Related,
            _ => true,
        }
    }
}

/// Weights λ of the six objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    #[serde(rename = "lambda_R")]
    pub related: f64,
    #[serde(rename = "lambda_U")]
    pub unrelated: f64,
    /// Per-stage override of `lambda_U` (used by the KL variant).
    #[serde(rename = "lambda_U_schedule")]
    pub unrelated_schedule: Option<[f64; 3]>,
    #[serde(rename = "lambda_S")]
    pub shuffle: f64,
    #[serde(rename = "lambda_PS")]
    pub part_shuffle: f64,
    #[serde(rename = "lambda_D")]
    pub domain: f64,
    #[serde(rename = "lambda_C")]
    pub class: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::for_variant(Variant::Dc)
    }
}

impl LossWeights {
    pub fn for_variant(variant: Variant) -> Self {
        let (unrelated, unrelated_schedule) = match variant {
            Variant::Dc => (1.0, None),
            Variant::Kl => (1e-3, Some([0.0, 1e-3, 1e-2])),
        };
        LossWeights {
            related: 20.0,
            unrelated,
            unrelated_schedule,
            shuffle: 10.0,
            part_shuffle: 10.0,
            domain: 1.0,
            class: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sched = self.unrelated_schedule.unwrap_or([0.0; 3]);
        let all = [
            ("lambda_R", self.related),
            ("lambda_U", self.unrelated),
            ("lambda_S", self.shuffle),
            ("lambda_PS", self.part_shuffle),
            ("lambda_D", self.domain),
            ("lambda_C", self.class),
        ]
        .into_iter()
        .chain(sched.map(|v| ("lambda_U_schedule", v)));
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: LossName, stage: u8) -> f64 {
        match name {
            LossName::Related => self.related,
            LossName::Unrelated => match self.unrelated_schedule {
                Some(s) => s[(stage.clamp(1, 3) - 1) as usize],
                None => self.unrelated,
            },
            LossName::Shuffle => self.shuffle,
            LossName::PartShuffle => self.part_shuffle,
            LossName::Domain => self.domain,
            LossName::Class => self.class,
        }
    }
}

/// Scalar loss tensors; absent entries are skipped.
#[derive(Debug, Clone, Default)]
pub struct LossTerms {
    pub related: Option<Tensor>,
    pub unrelated: Option<Tensor>,
    pub shuffle: Option<Tensor>,
    pub part_shuffle: Option<Tensor>,
    pub domain: Option<Tensor>,
    pub class: Option<Tensor>,
}

impl LossTerms {
    pub fn get(&self, name: LossName) -> Option<&Tensor> {
        match name {
            LossName::Related => self.related.as_ref(),
            LossName::Unrelated => self.unrelated.as_ref(),
            LossName::Shuffle => self.shuffle.as_ref(),
            LossName::PartShuffle => self.part_shuffle.as_ref(),
            LossName::Domain => self.domain.as_ref(),
            LossName::Class => self.class.as_ref(),
        }
    }
}

/// One row per active objective: raw value, weight, weighted value.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub entries: Vec<(LossName, f64, f64, f64)>,
}

impl LossBreakdown {
    pub fn weighted_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.3).sum()
    }
}

/// Weighted sum of the objectives active in `stage`, with a per-term breakdown.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights, stage: u8) -> Result<(Tensor, LossBreakdown)> {
    weights.validate()?;
    if !(1..=3).contains(&stage) {
        return Err(Error::InvalidArgument(format!("stage {stage} not in 1..=3")));
    }
    let mut total: Option<Tensor> = None;
    let mut entries = Vec::new();
    for name in LossName::ALL {
        if !name.active_in(stage) {
            continue;
        }
        let Some(t) = terms.get(name) else { continue };
        let w = weights.get(name, stage);
        let weighted = (t * w)?;
        entries.push((name, scalar_f64(t)?, w, scalar_f64(&weighted)?));
        total = Some(match total {
            Some(acc) => (acc + weighted)?,
            None => weighted,
        });
    }
    let total = match total {
        Some(t) => t,
        None => Tensor::zeros((), DType::F64, &Device::Cpu)?,
    };
    Ok((
        total.clone(),
        LossBreakdown {
            total: scalar_f64(&total)?,
            entries,
        },
    ))
}
