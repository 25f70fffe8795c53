//! Euclidean ranking with CMC and mAP under the Market gallery-filtering protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranking outcome over the queries that have at least one relevant gallery item.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// `[n_query][n_gallery]` euclidean distances.
    pub distances: Vec<Vec<f64>>,
    /// `cmc[k]`: fraction of scored queries with a match within the top `k+1`.
    pub cmc: Vec<f64>,
    pub map: f64,
    /// Queries that entered the averages.
    pub n_scored: usize,
    /// Queries without any relevant gallery item.
    pub n_dropped: usize,
}

/// The metrics report written to JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub map: f64,
    pub n_query: usize,
    pub n_dropped: usize,
}

impl RetrievalResult {
    pub fn rank(&self, k: usize) -> f64 {
        if self.cmc.is_empty() {
            return 0.0;
        }
        self.cmc[(k.max(1) - 1).min(self.cmc.len() - 1)]
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            rank1: self.rank(1),
            rank5: self.rank(5),
            rank10: self.rank(10),
            map: self.map,
            n_query: self.n_scored,
            n_dropped: self.n_dropped,
        }
    }
}

/// Identity and camera of each row of a feature matrix.
#[derive(Debug, Clone, Copy)]
pub struct Labelled<'a> {
    pub features: &'a [Vec<f64>],
    pub ids: &'a [usize],
    pub cams: &'a [u32],
}

impl<'a> Labelled<'a> {
    pub fn new(features: &'a [Vec<f64>], ids: &'a [usize], cams: &'a [u32]) -> Result<Self> {
        if features.len() != ids.len() || ids.len() != cams.len() {
            return Err(Error::InvalidArgument(format!(
                "{} features, {} ids, {} cameras",
                features.len(),
                ids.len(),
                cams.len()
            )));
        }
        Ok(Self { features, ids, cams })
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Gallery indices by ascending distance; ties keep gallery order.
pub fn ranking(distances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    order
}

/// Ranks the gallery for every query.
///
/// With `filter`, gallery items sharing both identity and camera with the
/// query are removed from its ranking.
pub fn retrieval_metrics(query: Labelled, gallery: Labelled, filter: bool) -> Result<RetrievalResult> {
    if query.features.is_empty() || gallery.features.is_empty() {
        return Err(Error::EmptySplit("retrieval needs a non-empty query and gallery".into()));
    }
    let dim = gallery.features[0].len();
    if query.features.iter().chain(gallery.features).any(|f| f.len() != dim) {
        return Err(Error::InvalidArgument("feature dimensions differ".into()));
    }
    let distances: Vec<Vec<f64>> = query
        .features
        .par_iter()
        .map(|q| gallery.features.iter().map(|g| euclidean(q, g)).collect())
        .collect();

    let n_g = gallery.features.len();
    let per_query: Vec<Option<(usize, f64)>> = distances
        .par_iter()
        .enumerate()
        .map(|(qi, d)| {
            let (qid, qcam) = (query.ids[qi], query.cams[qi]);
            let mut first_hit = None;
            let (mut hits, mut precision_sum, mut pos) = (0usize, 0f64, 0usize);
            for gi in ranking(d) {
                let same_id = gallery.ids[gi] == qid;
                if filter && same_id && gallery.cams[gi] == qcam {
                    continue;
                }
                pos += 1;
                if same_id {
                    hits += 1;
                    precision_sum += hits as f64 / pos as f64;
                    first_hit.get_or_insert(pos - 1);
                }
            }
            first_hit.map(|r| (r, precision_sum / hits as f64))
        })
        .collect();

    let scored: Vec<(usize, f64)> = per_query.iter().flatten().copied().collect();
    let n_scored = scored.len();
    let mut cmc = vec![0f64; n_g];
    for &(r, _) in &scored {
        cmc[r] += 1.0;
    }
    let mut acc = 0.0;
    for c in cmc.iter_mut() {
        acc += *c;
        *c = if n_scored == 0 { 0.0 } else { acc / n_scored as f64 };
    }
    let map = if n_scored == 0 {
        0.0
    } else {
        scored.iter().map(|s| s.1).sum::<f64>() / n_scored as f64
    };
    Ok(RetrievalResult {
        distances,
        cmc,
        map,
        n_scored,
        n_dropped: query.features.len() - n_scored,
    })
}
