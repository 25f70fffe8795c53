//! Helpers shared by the integration suites and the acceptance harness.
#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use isgan::disentangle::{part_shuffle, part_shuffle_rows, shuffle_registry, ReidMode, ShuffleMask};
use isgan::evaluator::{retrieval_metrics, Labelled};
use isgan::losses::{
    class_loss, correlation_per_part, decorrelation_loss, domain_loss, identity_loss, identity_shuffle_loss,
    kl_unrelated_loss, part_shuffle_loss, CorrelationPenalty, GanTerms, MovingStats,
};
use isgan::model::{KlParams, PartFeatureSet, PartLayout};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

pub fn t64(v: Vec<f64>, shape: &[usize]) -> Tensor {
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

pub fn to_vec(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar().unwrap()
}

// ---------------------------------------------------------------------------
// Finite differences

/// One differentiable input: values and shape.
pub type Input = (Vec<f64>, Vec<usize>);

/// Worst relative error between autodiff and central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
}

/// Compares `∂f/∂inputs` from autodiff with central differences of step `h`.
///
/// An entry passes when `|a - n| <= rtol * max(|a|, |n|) + atol`; the report
/// carries the largest `|a - n| / max(|a|, |n|, atol/rtol)`.
pub fn gradcheck(
    inputs: &[Input],
    f: &dyn Fn(&[Tensor]) -> isgan::Result<Tensor>,
    h: f64,
    rtol: f64,
    atol: f64,
) -> Result<GradReport, String> {
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(v, s)| Var::from_tensor(&t64(v.clone(), s)).unwrap())
        .collect();
    let tensors: Vec<Tensor> = vars.iter().map(|v| v.as_tensor().clone()).collect();
    let loss = f(&tensors).map_err(|e| e.to_string())?;
    let grads = loss.backward().map_err(|e| e.to_string())?;
    let eval = |vals: &[Vec<f64>]| -> f64 {
        let ts: Vec<Tensor> = vals.iter().zip(inputs).map(|(v, (_, s))| t64(v.clone(), s)).collect();
        scalar(&f(&ts).unwrap())
    };
    let mut max_rel = 0f64;
    let mut checked = 0;
    for (i, var) in vars.iter().enumerate() {
        let analytic = match grads.get(var) {
            Some(g) => to_vec(g),
            None => vec![0.0; inputs[i].0.len()],
        };
        for j in 0..inputs[i].0.len() {
            let mut plus: Vec<Vec<f64>> = inputs.iter().map(|x| x.0.clone()).collect();
            let mut minus = plus.clone();
            plus[i][j] += h;
            minus[i][j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[j];
            let scale = a.abs().max(numeric.abs());
            let err = (a - numeric).abs();
            if err > rtol * scale + atol {
                return Err(format!("input {i}[{j}]: autodiff {a:.10e} vs numeric {numeric:.10e}"));
            }
            max_rel = max_rel.max(err / scale.max(atol / rtol));
            checked += 1;
        }
    }
    Ok(GradReport { max_rel, checked })
}

/// Values of magnitude in `[lo, hi]` with random sign.
fn away_from_zero(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = r.random_range(lo..hi);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn gan_terms(ts: &[Tensor]) -> GanTerms<Tensor> {
    GanTerms {
        real: [ts[0].clone(), ts[1].clone()],
        recon: [ts[2].clone(), ts[3].clone(), ts[4].clone(), ts[5].clone()],
        shuffled: [ts[6].clone(), ts[7].clone()],
    }
}

/// Finite-difference checks of every training objective on toy shapes, in f64.
pub fn loss_gradchecks(seed: u64, h: f64, rtol: f64) -> Vec<(&'static str, Result<GradReport, String>)> {
    let mut r = rng(seed);
    let atol = 1e-9;
    let mut out = Vec::new();

    // Identity loss: K part logits [B, C].
    let (k, b, c) = (3, 4, 5);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
    let inputs: Vec<Input> = (0..k).map(|_| (normal_vec(&mut r, b * c), vec![b, c])).collect();
    let lab = labels.clone();
    out.push((
        "identity (L_R)",
        gradcheck(&inputs, &move |ts| identity_loss(ts, &lab, 0.1), h, rtol, atol),
    ));

    // Reconstruction losses: generated images kept away from the |.| kink.
    let shape = vec![2, 3, 4, 2];
    let n: usize = shape.iter().product();
    let anchor: Vec<f64> = (0..n).map(|_| r.random_range(0.2..0.8)).collect();
    let positive: Vec<f64> = (0..n).map(|_| r.random_range(0.2..0.8)).collect();
    let mut recon_inputs = Vec::new();
    for target in [&anchor, &anchor, &positive, &positive] {
        let off = away_from_zero(&mut r, n, 0.05, 0.3);
        recon_inputs.push((target.iter().zip(off).map(|(t, o)| t + o).collect::<Vec<_>>(), shape.clone()));
    }
    let (ta, tp) = (t64(anchor.clone(), &shape), t64(positive.clone(), &shape));
    let (a2, p2) = (ta.clone(), tp.clone());
    out.push((
        "identity shuffling (L_S)",
        gradcheck(
            &recon_inputs,
            &move |ts| identity_shuffle_loss(&a2, &p2, &[ts[0].clone(), ts[1].clone(), ts[2].clone(), ts[3].clone()]),
            h,
            rtol,
            atol,
        ),
    ));
    let shuffled_inputs = vec![recon_inputs[0].clone(), recon_inputs[3].clone()];
    out.push((
        "part shuffling (L_PS)",
        gradcheck(
            &shuffled_inputs,
            &move |ts| part_shuffle_loss(&ta, &tp, &[ts[0].clone(), ts[1].clone()]),
            h,
            rtol,
            atol,
        ),
    ));

    // KL regulariser: means and log-variances of K parts.
    let (k, b, p) = (3, 4, 5);
    let mut kl_inputs: Vec<Input> = (0..k).map(|_| (normal_vec(&mut r, b * p), vec![b, p])).collect();
    kl_inputs.extend((0..k).map(|_| (normal_vec(&mut r, b * p).iter().map(|x| 0.5 * x).collect(), vec![b, p])));
    out.push((
        "KL (L_U, KL variant)",
        gradcheck(
            &kl_inputs,
            &move |ts| {
                kl_unrelated_loss(&KlParams { means: ts[..k].to_vec(), log_vars: ts[k..].to_vec() })
            },
            h,
            rtol,
            atol,
        ),
    ));

    // Decorrelation: φ_U correlated with φ_R so every ρ_k stays clear of zero.
    let layout = PartLayout { branches: vec![1, 2], per_part_dim: 3 };
    let (kp, b) = (layout.num_parts(), 8);
    let mut stats = MovingStats::new(kp, 3, 0.1);
    let warm = |r: &mut ChaCha8Rng| -> PartFeatureSet {
        let parts = (0..kp).map(|_| t64(normal_vec(r, b * 3), &[b, 3])).collect();
        PartFeatureSet::new(parts, layout.clone()).unwrap()
    };
    let (w_r, w_u) = (warm(&mut r), warm(&mut r));
    stats.update(&w_r, &w_u).unwrap();
    let mut dc_inputs: Vec<Input> = Vec::new();
    let mut phi_r_vals = Vec::new();
    for _ in 0..kp {
        let v = normal_vec(&mut r, b * 3);
        phi_r_vals.push(v.clone());
        dc_inputs.push((v, vec![b, 3]));
    }
    for pr in &phi_r_vals {
        let noise = normal_vec(&mut r, b * 3);
        dc_inputs.push((pr.iter().zip(noise).map(|(x, e)| 0.8 * x + 0.3 * e).collect(), vec![b, 3]));
    }
    let lay = layout.clone();
    let check_rho = {
        let ts: Vec<Tensor> = dc_inputs.iter().map(|(v, s)| t64(v.clone(), s)).collect();
        let fr = PartFeatureSet::new(ts[..kp].to_vec(), lay.clone()).unwrap();
        let fu = PartFeatureSet::new(ts[kp..].to_vec(), lay.clone()).unwrap();
        correlation_per_part(&fr, &fu, &stats).unwrap().iter().map(scalar).fold(f64::INFINITY, |m, x| m.min(x.abs()))
    };
    let dc = if check_rho < 1e-3 {
        Err(format!("degenerate fixture: min |rho| = {check_rho}"))
    } else {
        gradcheck(
            &dc_inputs,
            &move |ts| {
                let fr = PartFeatureSet::new(ts[..kp].to_vec(), lay.clone())?;
                let fu = PartFeatureSet::new(ts[kp..].to_vec(), lay.clone())?;
                decorrelation_loss(&fr, &fu, &stats, CorrelationPenalty::Absolute)
            },
            h,
            rtol,
            atol,
        )
    };
    out.push(("decorrelation (L_U, DC variant)", dc));

    // Domain loss on patch logits [B, 1, 2, 2] for the eight images.
    let b = 3;
    let patch_inputs: Vec<Input> = (0..8).map(|_| (normal_vec(&mut r, b * 4), vec![b, 1, 2, 2])).collect();
    out.push((
        "domain, discriminator objective (L_D)",
        gradcheck(&patch_inputs, &|ts| Ok(domain_loss(&gan_terms(ts))?.objective), h, rtol, atol),
    ));
    out.push((
        "domain, generator term (L_D)",
        gradcheck(&patch_inputs, &|ts| Ok(domain_loss(&gan_terms(ts))?.generator), h, rtol, atol),
    ));

    // Class loss on [B, C] logits for the eight images.
    let (b, c) = (3, 4);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
    let class_inputs: Vec<Input> = (0..8).map(|_| (normal_vec(&mut r, b * c), vec![b, c])).collect();
    out.push((
        "class (L_C)",
        gradcheck(&class_inputs, &move |ts| class_loss(&gan_terms(ts), &labels, 0.1), h, rtol, atol),
    ));
    out
}

// ---------------------------------------------------------------------------
// Retrieval oracle

/// Per-query outcome from the brute-force oracle; `None` when nothing is relevant.
pub fn brute_force_query(
    q: &[f64],
    qid: usize,
    qcam: u32,
    gallery: &[Vec<f64>],
    gids: &[usize],
    gcams: &[u32],
    filter: bool,
) -> Option<(usize, f64)> {
    let dist = |g: &[f64]| q.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let d: Vec<f64> = gallery.iter().map(|g| dist(g)).collect();
    let kept: Vec<usize> = (0..gallery.len())
        .filter(|&i| !(filter && gids[i] == qid && gcams[i] == qcam))
        .collect();
    // 1-based rank of each kept item: one plus the kept items strictly ahead of it.
    let ahead = |i: usize, j: usize| d[j] < d[i] || (d[j] == d[i] && j < i);
    let rank = |i: usize| 1 + kept.iter().filter(|&&j| j != i && ahead(i, j)).count();
    let relevant: Vec<usize> = kept.iter().copied().filter(|&i| gids[i] == qid).collect();
    if relevant.is_empty() {
        return None;
    }
    let mut ap = 0.0;
    for &i in &relevant {
        let ri = rank(i);
        let hits_up_to = relevant.iter().filter(|&&j| rank(j) <= ri).count();
        ap += hits_up_to as f64 / ri as f64;
    }
    ap /= relevant.len() as f64;
    let first = relevant.iter().map(|&i| rank(i)).min().unwrap();
    Some((first, ap))
}

/// Runs `trials` random instances (≤ 6 gallery items, integer-valued features
/// so ties occur) and returns the first disagreement, if any.
pub fn retrieval_oracle_trials(seed: u64, trials: usize, filter: bool) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut scored_queries = 0;
    for t in 0..trials {
        let dim = r.random_range(1..=3);
        let n_g = r.random_range(1..=6);
        let n_q = r.random_range(1..=3);
        let n_ids = r.random_range(1..=3);
        let feat = |r: &mut ChaCha8Rng| (0..dim).map(|_| f64::from(r.random_range(-2i32..=2))).collect::<Vec<f64>>();
        let g: Vec<Vec<f64>> = (0..n_g).map(|_| feat(&mut r)).collect();
        let q: Vec<Vec<f64>> = (0..n_q).map(|_| feat(&mut r)).collect();
        let gids: Vec<usize> = (0..n_g).map(|_| r.random_range(0..n_ids)).collect();
        let qids: Vec<usize> = (0..n_q).map(|_| r.random_range(0..n_ids)).collect();
        let gcams: Vec<u32> = (0..n_g).map(|_| r.random_range(0..2)).collect();
        let qcams: Vec<u32> = (0..n_q).map(|_| r.random_range(0..2)).collect();

        let oracle: Vec<Option<(usize, f64)>> = (0..n_q)
            .map(|i| brute_force_query(&q[i], qids[i], qcams[i], &g, &gids, &gcams, filter))
            .collect();
        let scored: Vec<(usize, f64)> = oracle.iter().flatten().copied().collect();
        let got = retrieval_metrics(
            Labelled::new(&q, &qids, &qcams).unwrap(),
            Labelled::new(&g, &gids, &gcams).unwrap(),
            filter,
        )
        .map_err(|e| e.to_string())?;
        if got.n_scored != scored.len() || got.n_dropped != n_q - scored.len() {
            return Err(format!("trial {t}: scored {} vs oracle {}", got.n_scored, scored.len()));
        }
        scored_queries += scored.len();
        for k in 1..=n_g {
            let want = if scored.is_empty() {
                0.0
            } else {
                scored.iter().filter(|s| s.0 <= k).count() as f64 / scored.len() as f64
            };
            if (got.cmc[k - 1] - want).abs() > 1e-12 {
                return Err(format!("trial {t}: cmc[{}] {} vs oracle {want}", k - 1, got.cmc[k - 1]));
            }
        }
        let want_map = if scored.is_empty() { 0.0 } else { scored.iter().map(|s| s.1).sum::<f64>() / scored.len() as f64 };
        if (got.map - want_map).abs() > 1e-12 {
            return Err(format!("trial {t}: mAP {} vs oracle {want_map}", got.map));
        }
    }
    Ok(scored_queries)
}

// ---------------------------------------------------------------------------
// Moving statistics

/// Feeds a stationary bivariate Gaussian stream with correlation `rho` through
/// the moving statistics and returns the average standardised product over the
/// second half of the stream (the estimator is computed before each update).
pub fn moving_stats_estimate(rho: f64, batches: usize, batch: usize, momentum: f64, seed: u64) -> f64 {
    let layout = PartLayout { branches: vec![1], per_part_dim: 1 };
    let mut stats = MovingStats::new(1, 1, momentum);
    let mut r = rng(seed);
    let (mu_x, mu_y, sx, sy) = (1.5, -0.5, 2.0, 0.5);
    let mut acc = 0.0;
    let mut n = 0;
    for i in 0..batches {
        let mut xs = Vec::with_capacity(batch);
        let mut ys = Vec::with_capacity(batch);
        for _ in 0..batch {
            let z1: f64 = StandardNormal.sample(&mut r);
            let z2: f64 = StandardNormal.sample(&mut r);
            xs.push(mu_x + sx * z1);
            ys.push(mu_y + sy * (rho * z1 + (1.0 - rho * rho).sqrt() * z2));
        }
        let fr = PartFeatureSet::new(vec![t64(xs, &[batch, 1])], layout.clone()).unwrap();
        let fu = PartFeatureSet::new(vec![t64(ys, &[batch, 1])], layout.clone()).unwrap();
        if stats.initialized && i >= batches / 2 {
            acc += scalar(&correlation_per_part(&fr, &fu, &stats).unwrap()[0]);
            n += 1;
        }
        stats.update(&fr, &fu).unwrap();
    }
    acc / n as f64
}

// ---------------------------------------------------------------------------
// Shuffle operator

fn random_layout(r: &mut ChaCha8Rng) -> PartLayout {
    let n = r.random_range(1..=3);
    let mut branches: Vec<usize> = (0..n).map(|_| r.random_range(1..=4)).collect();
    if branches.iter().all(|&s| s == 1) {
        branches.push(r.random_range(2..=4));
    }
    PartLayout { branches, per_part_dim: r.random_range(1..=3) }
}

fn random_set(r: &mut ChaCha8Rng, layout: &PartLayout, b: usize) -> PartFeatureSet {
    let p = layout.per_part_dim;
    let parts = (0..layout.num_parts()).map(|_| t64(normal_vec(r, b * p), &[b, p])).collect();
    PartFeatureSet::new(parts, layout.clone()).unwrap()
}

fn same(a: &Tensor, b: &Tensor) -> bool {
    to_vec(a) == to_vec(b)
}

fn set_eq(a: &PartFeatureSet, b: &PartFeatureSet) -> bool {
    a.parts.len() == b.parts.len() && a.parts.iter().zip(&b.parts).all(|(x, y)| same(x, y))
}

/// Randomised trials of the shuffle-operator invariants; returns the number of
/// checks performed or the first violation.
pub fn shuffle_property_trials(seed: u64, trials: usize) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut checks = 0;
    for t in 0..trials {
        let layout = random_layout(&mut r);
        let mode = if r.random_bool(0.5) { ReidMode::ShortTerm } else { ReidMode::LongTerm };
        let b = r.random_range(1..=3);
        let (a, bb) = (random_set(&mut r, &layout, b), random_set(&mut r, &layout, b));
        let registry = shuffle_registry(&layout, mode);
        let bits: Vec<bool> = (0..registry.len()).map(|_| r.random_bool(0.5)).collect();
        let mask = ShuffleMask::new(&layout, mode, bits).unwrap();
        let fail = |what: &str| Err(format!("trial {t} ({:?}, {mode:?}): {what}", layout.branches));

        let none = ShuffleMask::filled(&layout, mode, false);
        if !set_eq(&part_shuffle(&a, &bb, &none).unwrap(), &a) {
            return fail("identity mask changed the input");
        }
        let all = ShuffleMask::filled(&layout, mode, true);
        let full = part_shuffle(&a, &bb, &all).unwrap();
        for k in 0..layout.num_parts() {
            let want = if registry.contains(&k) { &bb.parts[k] } else { &a.parts[k] };
            if !same(&full.parts[k], want) {
                return fail("full swap took the wrong source");
            }
        }
        let s_ab = part_shuffle(&a, &bb, &mask).unwrap();
        let s_ba = part_shuffle(&bb, &a, &mask).unwrap();
        if !set_eq(&part_shuffle(&s_ab, &s_ba, &mask).unwrap(), &a) {
            return fail("not an involution on the swapped pair");
        }
        if !set_eq(&part_shuffle(&a, &a, &mask).unwrap(), &a) {
            return fail("equal inputs were changed");
        }
        let s_comp = part_shuffle(&bb, &a, &mask.complement()).unwrap();
        for &k in &registry {
            if !same(&s_ab.parts[k], &s_comp.parts[k]) {
                return fail("complement mask disagrees on a registry unit");
            }
        }
        if s_ab.concat().unwrap().dims() != [b, layout.total_dim()] {
            return fail("length not preserved");
        }
        let masks: Vec<ShuffleMask> = (0..b)
            .map(|_| {
                let bits = (0..registry.len()).map(|_| r.random_bool(0.5)).collect();
                ShuffleMask::new(&layout, mode, bits).unwrap()
            })
            .collect();
        let rows = part_shuffle_rows(&a, &bb, &masks).unwrap();
        for (i, m) in masks.iter().enumerate() {
            let idx = Tensor::new(&[i as u32], &Device::Cpu).unwrap();
            let (ai, bi) = (a.select(&idx).unwrap(), bb.select(&idx).unwrap());
            if !set_eq(&rows.select(&idx).unwrap(), &part_shuffle(&ai, &bi, m).unwrap()) {
                return fail("row-wise form disagrees with per-row application");
            }
        }
        checks += 7;
    }
    Ok(checks)
}
