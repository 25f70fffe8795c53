//! Training objectives: identity classification, identity and part-level
//! shuffling reconstruction, the two identity-unrelated regularisers, the
//! domain/class adversarial terms, and their weighted total.

mod adversarial;
mod classification;
mod reconstruction;
mod regularizers;
mod total;

pub use adversarial::{domain_loss, DomainLoss};
pub use classification::{class_loss, cross_entropy, identity_loss, smoothed_targets, softmax_prob};
pub use reconstruction::{identity_shuffle_loss, part_shuffle_loss};
pub use regularizers::{
    correlation_per_part, decorrelation_loss, kl_unrelated_loss, CorrelationPenalty, MovingStats,
    StreamStats,
};
pub use total::{total_loss, LossBreakdown, LossName, LossTerms, LossWeights};

/// The eight images scored by the adversarial and class terms of one pair.
///
/// `recon[2*i + j]` is generated from `φ_R(I_j) ⊕ φ_U(I_i)` and targets `I_i`
/// with `a = 0`, `p = 1`; `shuffled[i]` is the part-shuffled generation
/// targeting `I_i`.
#[derive(Debug, Clone)]
pub struct GanTerms<T> {
    pub real: [T; 2],
    pub recon: [T; 4],
    pub shuffled: [T; 2],
}

impl<T> GanTerms<T> {
    pub fn fakes(&self) -> impl Iterator<Item = &T> {
        self.recon.iter().chain(&self.shuffled)
    }

    pub fn all(&self) -> impl Iterator<Item = &T> {
        self.real.iter().chain(self.fakes())
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<GanTerms<U>, E> {
        Ok(GanTerms {
            real: [f(&self.real[0])?, f(&self.real[1])?],
            recon: [
                f(&self.recon[0])?,
                f(&self.recon[1])?,
                f(&self.recon[2])?,
                f(&self.recon[3])?,
            ],
            shuffled: [f(&self.shuffled[0])?, f(&self.shuffled[1])?],
        })
    }
}
