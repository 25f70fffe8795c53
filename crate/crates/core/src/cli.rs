//! Command-line front end. Every command resolves a [`RunConfig`], writes
//! `config_resolved.json` into the run directory and reports failures as one
//! JSON line on stderr with a distinct exit code.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{write_manifest_dataset, DatasetSplits, ImageRecord, Manifest};
use crate::error::{Error, Result};
use crate::evaluator::{
    evaluate_retrieval, export_embeddings, extract_features, generation_grid, probe_attribute, EmbeddingRow,
    FeatureKind, GridMode, MetricsReport, ProbeAttribute, ProbeReport, DEFAULT_EVAL_BATCH,
};
use crate::model::ModelBundle;
use crate::trainer::{latest_checkpoint, StageReport, Trainer, TrainerOptions};

#[derive(Debug, Parser)]
#[command(name = "isgan", version, about = "Disentangled person re-identification features")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; omitted means all defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override such as `weights.lambda_R=10` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output root; shorthand for `--set out_dir=<dir>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic dataset to disk as PNGs plus a manifest.
    Synth {
        /// Target directory (default `<out>/synth`).
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Run (or resume) the three-stage schedule.
    Train {
        /// Continue from the latest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Retrieval metrics on query/gallery.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Keep same-identity same-camera gallery items.
        #[arg(long)]
        no_filter: bool,
    },
    /// Linear probes of both representations on a synthetic factor.
    Probe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// torso_color, leg_color, x_offset, background or occlusion.
        #[arg(long)]
        attribute: String,
    },
    /// Grids of generated images.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// recon, r_only, u_only, interp_r, interp_u or part_swap.
        #[arg(long, default_value = "recon")]
        mode: String,
        /// Gallery index pairs, e.g. `0:5,3:9`.
        #[arg(long, default_value = "0:1")]
        pairs: String,
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        alphas: String,
    },
    /// Query and gallery features as CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "related")]
        kind: String,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::LayoutMismatch(_) => 3,
        Error::Dataset(_) | Error::EmptySplit(_) | Error::InvalidLabel { .. } | Error::Image(_) => 4,
        Error::Checkpoint(_) | Error::FrozenModified(_) => 5,
        Error::Diverged { .. } => 6,
        Error::Io { .. } | Error::Csv(_) => 7,
        Error::Tensor(_) => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        3 => "config",
        4 => "dataset",
        5 => "checkpoint",
        6 => "diverged",
        7 => "io",
        _ => "internal",
    }
}

/// Parses `argv`, runs the command and returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            let line = serde_json::json!({ "error": error_kind(&e), "message": e.to_string() });
            eprintln!("{line}");
            exit_code(&e)
        }
    }
}

/// Runs one parsed invocation and returns a JSON summary.
pub fn run(cli: Cli) -> Result<serde_json::Value> {
    let mut overrides = cli.global.overrides;
    if let Some(out) = &cli.global.out {
        overrides.push(format!("out_dir={}", serde_json::to_string(out)?));
    }
    let cfg = RunConfig::load(cli.global.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Synth { dest } => {
            let dest = dest.unwrap_or_else(|| cfg.out_dir.join("synth"));
            Ok(serde_json::to_value(cmd_synth(&cfg, &dest)?)?)
        }
        Command::Train { resume } => {
            let reports = cmd_train(&cfg, resume)?;
            Ok(serde_json::json!({
                "run_dir": cfg.run_dir(),
                "stages": reports.iter().map(|r| serde_json::json!({"stage": r.stage, "epochs": r.epochs_completed})).collect::<Vec<_>>(),
            }))
        }
        Command::Eval { checkpoint, no_filter } => Ok(serde_json::to_value(cmd_eval(&cfg, checkpoint.as_deref(), !no_filter)?)?),
        Command::Probe { checkpoint, attribute } => {
            let attr = ProbeAttribute::from_name(&attribute)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown attribute `{attribute}`")))?;
            Ok(serde_json::to_value(cmd_probe(&cfg, checkpoint.as_deref(), attr)?)?)
        }
        Command::Generate { checkpoint, mode, pairs, alphas } => {
            let mode = GridMode::from_name(&mode).ok_or_else(|| Error::InvalidArgument(format!("unknown mode `{mode}`")))?;
            let path = cmd_generate(&cfg, checkpoint.as_deref(), mode, &parse_pairs(&pairs)?, &parse_alphas(&alphas)?)?;
            Ok(serde_json::json!({ "grid": path }))
        }
        Command::ExportEmbeddings { checkpoint, kind } => {
            let kind = match kind.as_str() {
                "related" => FeatureKind::Related,
                "unrelated" => FeatureKind::Unrelated,
                _ => return Err(Error::InvalidArgument(format!("unknown feature kind `{kind}`"))),
            };
            let path = cmd_export_embeddings(&cfg, checkpoint.as_deref(), kind)?;
            Ok(serde_json::json!({ "embeddings": path }))
        }
    }
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once(':').ok_or_else(|| Error::InvalidArgument(format!("pair `{p}` is not a:b")))?;
            let n = |x: &str| x.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad index `{x}`")));
            Ok((n(a)?, n(b)?))
        })
        .collect()
}

fn parse_alphas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad alpha `{a}`"))))
        .collect()
}

fn prepare_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.run_dir();
    crate::fsutil::create_dir_all(&dir)?;
    cfg.write_resolved(&dir)?;
    Ok(dir)
}

/// A freshly initialised model sized for `data`.
pub fn build_model(cfg: &RunConfig, data: &DatasetSplits) -> Result<ModelBundle> {
    ModelBundle::new(cfg.model.clone(), data.train_classes, cfg.seed)
}

pub fn trainer_options(cfg: &RunConfig) -> Result<TrainerOptions> {
    Ok(TrainerOptions {
        train: cfg.train.clone(),
        weights: cfg.weights.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        run_dir: Some(cfg.run_dir()),
        config_echo: serde_json::to_value(cfg)?,
    })
}

/// Loads the dataset and a model from `checkpoint`, or from the run's latest one.
pub fn load_trained(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(ModelBundle, DatasetSplits)> {
    let data = cfg.dataset.load(cfg.seed)?;
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => latest_checkpoint(&cfg.run_dir())
            .ok_or_else(|| Error::Checkpoint(format!("no checkpoint under {}", cfg.run_dir().display())))?,
    };
    let ck = Checkpoint::load(&path)?;
    let model = build_model(cfg, &data)?;
    model.load_state(&|k| ck.get(k))?;
    Ok((model, data))
}

/// Writes the dataset to `dest` (never modifies an existing dataset in place).
pub fn cmd_synth(cfg: &RunConfig, dest: &Path) -> Result<Manifest> {
    if dest.join(crate::dataset::MANIFEST_FILE).exists() {
        return Err(Error::InvalidArgument(format!("{} already holds a dataset", dest.display())));
    }
    prepare_run_dir(cfg)?;
    let data = cfg.dataset.load(cfg.seed)?;
    write_manifest_dataset(dest, &data)
}

/// Trains, writing `log.csv`, `metrics.csv`, checkpoints and the final `metrics.json`.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<Vec<StageReport>> {
    let dir = prepare_run_dir(cfg)?;
    let data = cfg.dataset.load(cfg.seed)?;
    let model = build_model(cfg, &data)?;
    let mut trainer = Trainer::new(model, data, trainer_options(cfg)?)?;
    if resume {
        if let Some(path) = latest_checkpoint(&dir) {
            log::info!("resuming from {}", path.display());
            trainer.load_checkpoint(Checkpoint::load(&path)?)?;
        }
    }
    let reports = trainer.run()?;
    let metrics = evaluate_retrieval(&trainer.model, trainer.data(), true)?.report();
    write_json(&dir.join("metrics.json"), &metrics)?;
    Ok(reports)
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, filter: bool) -> Result<MetricsReport> {
    let dir = prepare_run_dir(cfg)?;
    let (model, data) = load_trained(cfg, checkpoint)?;
    let metrics = evaluate_retrieval(&model, &data, filter)?.report();
    write_json(&dir.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

/// Probe records: the held-out identities, or the training split when there are none.
pub fn probe_records(data: &DatasetSplits) -> Vec<ImageRecord> {
    let held_out: Vec<ImageRecord> = data.query.iter().chain(&data.gallery).cloned().collect();
    if held_out.is_empty() {
        data.train.clone()
    } else {
        held_out
    }
}

pub fn cmd_probe(cfg: &RunConfig, checkpoint: Option<&Path>, attribute: ProbeAttribute) -> Result<ProbeReport> {
    let dir = prepare_run_dir(cfg)?;
    let (model, data) = load_trained(cfg, checkpoint)?;
    let report = probe_attribute(&model, &probe_records(&data), attribute, &cfg.probe, cfg.seed)?;
    write_json(&dir.join(format!("probe_{}.json", attribute.name())), &report)?;
    Ok(report)
}

/// Writes `grids/<mode>.png` (plus its label sidecar) from gallery image pairs.
pub fn cmd_generate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    mode: GridMode,
    pairs: &[(usize, usize)],
    alphas: &[f64],
) -> Result<PathBuf> {
    let dir = prepare_run_dir(cfg)?;
    let (model, data) = load_trained(cfg, checkpoint)?;
    let pool = if data.gallery.is_empty() { &data.train } else { &data.gallery };
    let get = |i: usize| {
        pool.get(i)
            .map(|r| &r.image)
            .ok_or_else(|| Error::InvalidArgument(format!("image index {i} out of range ({})", pool.len())))
    };
    let images = pairs.iter().map(|&(a, b)| Ok((get(a)?, get(b)?))).collect::<Result<Vec<_>>>()?;
    let grid = generation_grid(&model, &images, mode, alphas)?;
    let path = dir.join("grids").join(format!("{}.png", mode.name()));
    grid.save(&path)?;
    Ok(path)
}

/// Writes `embeddings.csv` with query rows followed by gallery rows.
pub fn cmd_export_embeddings(cfg: &RunConfig, checkpoint: Option<&Path>, kind: FeatureKind) -> Result<PathBuf> {
    let dir = prepare_run_dir(cfg)?;
    let (model, data) = load_trained(cfg, checkpoint)?;
    let records: Vec<ImageRecord> = data.query.iter().chain(&data.gallery).cloned().collect();
    let feats = extract_features(&model, &records, kind, DEFAULT_EVAL_BATCH)?;
    let rows: Vec<EmbeddingRow> = records
        .iter()
        .zip(feats)
        .map(|(r, features)| EmbeddingRow { id: r.identity.to_string(), cam: r.camera_id, features })
        .collect();
    let path = dir.join("embeddings.csv");
    export_embeddings(&path, &rows, model.layout().total_dim())?;
    Ok(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    crate::fsutil::write_atomic(path, format!("{text}\n").as_bytes())
}
