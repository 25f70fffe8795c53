//! The decorrelation estimator on a stationary correlated Gaussian stream.
//!
//! `cargo run --release --example moving_stats -- [rho]`

use candle_core::{Device, Tensor};
use rand_distr::{Distribution, StandardNormal};

use isgan::losses::{correlation_per_part, MovingStats};
use isgan::model::{PartFeatureSet, PartLayout};
use isgan::rng::stream;

fn main() -> isgan::Result<()> {
    let rho: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let layout = PartLayout { branches: vec![1], per_part_dim: 1 };
    let mut stats = MovingStats::new(1, 1, MovingStats::DEFAULT_MOMENTUM);
    let mut rng = stream(1, &[]);
    let (batches, b) = (4000, 64);
    let mut tail = Vec::new();
    for i in 0..batches {
        let mut xs = Vec::with_capacity(b);
        let mut ys = Vec::with_capacity(b);
        for _ in 0..b {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            xs.push(3.0 + 2.0 * z1);
            ys.push(-1.0 + 0.5 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2));
        }
        let fr = PartFeatureSet::new(vec![Tensor::from_vec(xs, (b, 1), &Device::Cpu)?], layout.clone())?;
        let fu = PartFeatureSet::new(vec![Tensor::from_vec(ys, (b, 1), &Device::Cpu)?], layout.clone())?;
        if stats.initialized {
            let r: f64 = correlation_per_part(&fr, &fu, &stats)?[0].to_scalar()?;
            if i >= batches / 2 {
                tail.push(r);
            }
            if i % 500 == 0 {
                println!("batch {i}: rho_hat {r:+.4}, moving std of phi_R {:.4}", stats.related[0].std[0]);
            }
        }
        stats.update(&fr, &fu)?;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    println!("true rho {rho}, averaged estimate over the second half {mean:.4}");
    Ok(())
}
