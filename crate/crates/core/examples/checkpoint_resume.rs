//! Interrupting a run and resuming it from its last checkpoint reproduces the
//! uninterrupted run exactly. Uses a shortened schedule.
//!
//! `cargo run --release --example checkpoint_resume`

use isgan::checkpoint::Checkpoint;
use isgan::config::RunConfig;
use isgan::dataset::DatasetSplits;
use isgan::trainer::{latest_checkpoint, Position, Trainer};

fn short_config(name: &str, out: &std::path::Path) -> isgan::Result<RunConfig> {
    let doc = serde_json::json!({
        "name": name,
        "out_dir": out,
        "dataset": {"synth": {"n_ids": 6, "imgs_per_id": 6, "n_test_ids": 4}},
        "train": {"epochs": [2, 2, 2], "batches_per_epoch": 2, "eval_each_epoch": false}
    });
    RunConfig::from_value(doc)
}

fn trainer(cfg: &RunConfig, data: DatasetSplits) -> isgan::Result<Trainer> {
    let model = isgan::cli::build_model(cfg, &data)?;
    Trainer::new(model, data, isgan::cli::trainer_options(cfg)?)
}

fn main() -> isgan::Result<()> {
    let out = std::env::temp_dir().join("isgan_resume_demo");
    let _ = std::fs::remove_dir_all(&out);

    let straight = short_config("straight", &out)?;
    let mut t = trainer(&straight, straight.dataset.load(0)?)?;
    t.run()?;
    let reference = t.log.last().cloned().expect("logged");

    let split = short_config("split", &out)?;
    let mut first = trainer(&split, split.dataset.load(0)?)?;
    first.run_until(Some(Position { stage: 2, epoch: 1 }))?;
    let ck_path = latest_checkpoint(&split.run_dir()).expect("checkpoint written");
    println!("interrupted at {:?}; resuming from {}", first.position(), ck_path.display());
    drop(first);

    let mut second = trainer(&split, split.dataset.load(0)?)?;
    second.load_checkpoint(Checkpoint::load(&ck_path)?)?;
    second.run()?;
    let resumed = second.log.last().cloned().expect("logged");
    println!("uninterrupted last loss {} = {}", reference.name, reference.value);
    println!("resumed       last loss {} = {}", resumed.name, resumed.value);
    println!("identical: {}", reference == resumed);
    Ok(())
}
