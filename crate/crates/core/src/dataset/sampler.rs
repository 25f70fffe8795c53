//! Identity-balanced P×K batches with anchor/positive pairs.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use candle_core::{DType, Tensor};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use super::{augment, images_to_tensor, AugmentPolicy, ImageRecord};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PkBatch {
    /// Index into the sampled record list, one per batch slot.
    pub record_indices: Vec<usize>,
    pub labels: Vec<usize>,
    /// `(anchor, positive)` batch positions; one per slot, same label, distinct slots.
    pub pairs: Vec<(usize, usize)>,
}

impl PkBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn anchors(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn positives(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

/// Draws `p` identities and `k` images of each.
///
/// Identities with fewer than `k` images are sampled with replacement.
pub fn pk_sample(records: &[ImageRecord], p: usize, k: usize, rng: &mut impl Rng) -> Result<PkBatch> {
    if p == 0 || k < 2 {
        return Err(Error::InvalidArgument(format!("need P >= 1 and K >= 2, got P={p}, K={k}")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.identity).or_default().push(i);
    }
    if groups.len() < p {
        return Err(Error::Dataset(format!("{} identities available, P={p} requested", groups.len())));
    }
    let ids: Vec<usize> = groups.keys().copied().collect();
    let chosen: Vec<usize> = ids.choose_multiple(rng, p).copied().collect();

    let mut batch = PkBatch {
        record_indices: Vec::with_capacity(p * k),
        labels: Vec::with_capacity(p * k),
        pairs: Vec::with_capacity(p * k),
    };
    for (g, id) in chosen.iter().enumerate() {
        let pool = &groups[id];
        let picks: Vec<usize> = if pool.len() >= k {
            pool.choose_multiple(rng, k).copied().collect()
        } else {
            (0..k).map(|_| *pool.choose(rng).expect("non-empty group")).collect()
        };
        batch.record_indices.extend(picks);
        batch.labels.extend(std::iter::repeat_n(*id, k));
        for a in 0..k {
            let mut other = rng.random_range(0..k - 1);
            if other >= a {
                other += 1;
            }
            batch.pairs.push((g * k + a, g * k + other));
        }
    }
    Ok(batch)
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var("ISGAN_NUM_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
    })
}

/// Augments the batch images in parallel into a `[B, 3, H, W]` tensor.
///
/// Slot `i` uses a stream derived from `(seed, batch_key, i)`, so the result
/// does not depend on the worker count (`ISGAN_NUM_WORKERS`).
pub fn materialize(
    records: &[ImageRecord],
    batch: &PkBatch,
    policy: &AugmentPolicy,
    seed: u64,
    batch_key: &[u64],
    dtype: DType,
) -> Result<Tensor> {
    let images: Vec<_> = pool().install(|| {
        batch
            .record_indices
            .par_iter()
            .enumerate()
            .map(|(slot, &ri)| {
                let mut tags = vec![tag::AUGMENT];
                tags.extend_from_slice(batch_key);
                tags.push(slot as u64);
                augment(&records[ri].image, &mut stream(seed, &tags), policy)
            })
            .collect()
    });
    let refs: Vec<_> = images.iter().collect();
    images_to_tensor(&refs, dtype)
}

/// Shuffles record order in place with `rng` (used for probe splits).
pub fn shuffled_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}
