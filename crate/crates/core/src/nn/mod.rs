//! Minimal layer library on top of `candle-core` tensors.
//!
//! Parameters live in a [`ParamStore`] per model component, so freezing,
//! hashing, optimizer bookkeeping, and checkpointing all work on named
//! variables without reflection.

mod layers;
pub mod ops;
mod store;

pub use layers::{BatchNorm, Conv2d, ConvTranspose2d, Dropout, InstanceNorm, Linear};
pub use store::{Builder, Init, ParamStore};

use crate::rng::ChaCha8Rng;

/// Forward-pass context: train/eval switch plus the random stream used by
/// dropout and reparameterized sampling.
pub struct Ctx<'a> {
    train: bool,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Ctx<'static> {
    /// Inference mode: dropout off, batch norm uses running statistics,
    /// stochastic sampling collapses to its mean.
    pub fn eval() -> Self {
        Ctx {
            train: false,
            rng: None,
        }
    }
}

impl<'a> Ctx<'a> {
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Ctx {
            train: true,
            rng: Some(rng),
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        self.rng.as_deref_mut()
    }
}
