//! Three-stage training on the procedural dataset, printing per-epoch
//! retrieval metrics and the last loss values of each stage.
//!
//! `cargo run --release --example toy_training -- [dc|kl] [seed]`

use std::time::Instant;

use isgan::dataset::{synth_splits, SynthSpec};
use isgan::losses::LossWeights;
use isgan::model::{ModelBundle, ModelConfig, Variant};
use isgan::trainer::{Trainer, TrainerOptions};

fn main() -> isgan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let variant = match args.next().as_deref() {
        Some("kl") => Variant::Kl,
        _ => Variant::Dc,
    };
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let data = synth_splits(&SynthSpec::new(seed, 20, 16, (64, 32)), 20, 2)?;
    let config = ModelConfig { variant, ..ModelConfig::default() };
    let model = ModelBundle::new(config, data.train_classes, seed)?;
    let mut opts = TrainerOptions::new(seed);
    opts.weights = LossWeights::for_variant(variant);
    let mut trainer = Trainer::new(model, data, opts)?;

    let t0 = Instant::now();
    for report in trainer.run()? {
        let last: Vec<String> = trainer
            .log
            .iter()
            .rev()
            .filter(|r| r.stage == report.stage)
            .take(12)
            .map(|r| format!("{}={:.4}", r.name, r.value))
            .collect();
        println!("stage {} done after {:.1}s: {}", report.stage, t0.elapsed().as_secs_f64(), last.join(" "));
    }
    for e in &trainer.evals {
        println!(
            "stage {} epoch {} lr {:.2e}: rank1 {:.3} mAP {:.3}",
            e.stage, e.epoch, e.lr, e.metrics.rank1, e.metrics.map
        );
    }
    Ok(())
}
