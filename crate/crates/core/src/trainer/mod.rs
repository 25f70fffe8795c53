//! The three-stage training schedule: plans, learning rates, freezing,
//! logging and resumable checkpoints.
//!
//! Run directory layout:
//!
//! ```text
//! <run_dir>/log.csv                 stage,epoch,step,name,value per step
//! <run_dir>/metrics.csv             retrieval metrics after each epoch
//! <run_dir>/stage<k>/epoch<n>.ckpt  state after n completed epochs of stage k
//! ```

mod plan;
mod step;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use plan::{
    build_default_plan, build_plan, lr_at, scaled_epochs, PlanScale, ScheduleSpec, StagePlan, LONG_TERM_EPOCHS,
    FULL_EPOCHS, FULL_LR,
};
pub use step::StepValues;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::dataset::{materialize, pk_sample, AugmentPolicy, DatasetSplits};
use crate::disentangle::ReidMode;
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_retrieval, MetricsReport};
use crate::losses::{CorrelationPenalty, LossWeights, MovingStats};
use crate::model::{Component, ModelBundle, Variant};
use crate::nn::ops::{tensor_from_f64, to_f64_vec};
use crate::optim::Optimizer;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Full,
    Toy,
}

/// Augmentation probabilities; the target size comes from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSettings {
    pub flip_prob: f64,
    pub crop_pad: f64,
    pub erase_prob: f64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self { flip_prob: 0.5, crop_pad: 0.1, erase_prob: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub scale: ScaleKind,
    /// Epoch divisor for the toy scale.
    pub toy_factor: usize,
    /// Explicit per-stage epochs, overriding the scale defaults.
    pub epochs: Option<[usize; 3]>,
    pub lr: Option<[f64; 3]>,
    /// Defaults to 10 at full scale and 1 at toy scale.
    pub warmup_epochs: Option<usize>,
    pub lr_min_ratio: f64,
    pub label_smoothing: f64,
    /// Identities per batch.
    pub batch_p: usize,
    /// Images per identity.
    pub batch_k: usize,
    /// Defaults to `n_train / (P·K)`.
    pub batches_per_epoch: Option<usize>,
    /// Global gradient-norm cap in stages 2 and 3; `null` disables clipping.
    pub grad_clip: Option<f64>,
    /// Abort with a diagnostic checkpoint on a non-finite loss.
    pub divergence_guard: bool,
    pub stats_momentum: f64,
    pub correlation_penalty: CorrelationPenalty,
    pub augment: AugmentSettings,
    /// Compute retrieval metrics after every epoch.
    pub eval_each_epoch: bool,
    pub save_checkpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scale: ScaleKind::Toy,
            toy_factor: 50,
            epochs: None,
            lr: None,
            warmup_epochs: None,
            lr_min_ratio: 0.01,
            label_smoothing: 0.1,
            batch_p: 4,
            batch_k: 4,
            batches_per_epoch: None,
            grad_clip: Some(10.0),
            divergence_guard: true,
            stats_momentum: MovingStats::DEFAULT_MOMENTUM,
            correlation_penalty: CorrelationPenalty::Absolute,
            augment: AugmentSettings::default(),
            eval_each_epoch: true,
            save_checkpoints: true,
        }
    }
}

impl TrainConfig {
    pub fn plan_scale(&self) -> PlanScale {
        match self.scale {
            ScaleKind::Full => PlanScale::Full,
            ScaleKind::Toy => PlanScale::Toy { factor: self.toy_factor },
        }
    }

    pub fn schedule(&self) -> ScheduleSpec {
        let mut s = ScheduleSpec::for_scale(self.plan_scale());
        if let Some(w) = self.warmup_epochs {
            s.warmup_epochs = w;
        }
        s.lr_min_ratio = self.lr_min_ratio;
        s.label_smoothing = self.label_smoothing;
        s
    }

    pub fn plans(&self, mode: ReidMode, weights: &LossWeights) -> Result<Vec<StagePlan>> {
        let base = match mode {
            ReidMode::ShortTerm => FULL_EPOCHS,
            ReidMode::LongTerm => LONG_TERM_EPOCHS,
        };
        let epochs = self.epochs.unwrap_or_else(|| scaled_epochs(base, self.plan_scale()));
        let plans = build_plan(epochs, self.lr.unwrap_or(FULL_LR), weights)?;
        let schedule = self.schedule();
        for p in &plans {
            schedule.validate(p.epochs)?;
        }
        Ok(plans)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_p == 0 || self.batch_k < 2 {
            return Err(Error::Config("batch_p must be >= 1 and batch_k >= 2".into()));
        }
        if self.toy_factor == 0 || self.batches_per_epoch == Some(0) {
            return Err(Error::Config("toy_factor and batches_per_epoch must be positive".into()));
        }
        if !(self.stats_momentum > 0.0 && self.stats_momentum < 1.0) {
            return Err(Error::Config("stats_momentum must lie in (0,1)".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Everything besides the model and data that a training run needs.
#[derive(Debug, Clone)]
pub struct TrainerOptions {
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub mode: ReidMode,
    pub seed: u64,
    /// Where logs and checkpoints go; `None` keeps everything in memory.
    pub run_dir: Option<PathBuf>,
    /// Stored in every checkpoint.
    pub config_echo: serde_json::Value,
}

impl TrainerOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            train: TrainConfig::default(),
            weights: LossWeights::default(),
            mode: ReidMode::ShortTerm,
            seed,
            run_dir: None,
            config_echo: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub stage: u8,
    pub epoch: usize,
    pub step: usize,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEval {
    pub stage: u8,
    /// Completed epochs within the stage.
    pub epoch: usize,
    pub lr: f64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: u8,
    pub epochs_completed: usize,
    /// Frozen-component digests at stage start and end.
    pub frozen_before: BTreeMap<Component, [u8; 32]>,
    pub frozen_after: BTreeMap<Component, [u8; 32]>,
    /// Components whose digest changed during the stage.
    pub changed: Vec<Component>,
    pub checkpoints: Vec<PathBuf>,
}

/// Stage and number of completed epochs within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Position {
    pub stage: u8,
    pub epoch: usize,
}

pub struct Trainer {
    pub model: ModelBundle,
    data: DatasetSplits,
    opts: TrainerOptions,
    plans: Vec<StagePlan>,
    schedule: ScheduleSpec,
    pub stats: MovingStats,
    position: Position,
    resume_state: Option<Checkpoint>,
    logs_ready: bool,
    pub log: Vec<LogRow>,
    pub evals: Vec<EpochEval>,
    erase_fill: [f32; 3],
}

const LOG_FILE: &str = "log.csv";
const METRICS_FILE: &str = "metrics.csv";

impl Trainer {
    pub fn new(model: ModelBundle, data: DatasetSplits, opts: TrainerOptions) -> Result<Self> {
        opts.train.validate()?;
        if data.train.is_empty() {
            return Err(Error::EmptySplit("train".into()));
        }
        if data.train_classes != model.num_classes() {
            return Err(Error::Config(format!(
                "model has {} classes, training split {}",
                model.num_classes(),
                data.train_classes
            )));
        }
        let plans = opts.train.plans(opts.mode, &opts.weights)?;
        let schedule = opts.train.schedule();
        let layout = model.layout();
        let stats = MovingStats::new(layout.num_parts(), layout.per_part_dim, opts.train.stats_momentum);
        let mut sum = [0f64; 3];
        let mut n = 0usize;
        for r in &data.train {
            for px in r.image.pixels() {
                for c in 0..3 {
                    sum[c] += f64::from(px.0[c]);
                }
                n += 1;
            }
        }
        let erase_fill = sum.map(|s| (s / n.max(1) as f64) as f32);
        Ok(Self {
            model,
            data,
            opts,
            plans,
            schedule,
            stats,
            position: Position { stage: 1, epoch: 0 },
            resume_state: None,
            logs_ready: false,
            log: Vec::new(),
            evals: Vec::new(),
            erase_fill,
        })
    }

    pub fn plans(&self) -> &[StagePlan] {
        &self.plans
    }

    pub fn schedule(&self) -> &ScheduleSpec {
        &self.schedule
    }

    pub fn data(&self) -> &DatasetSplits {
        &self.data
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn is_finished(&self) -> bool {
        self.position.stage > 3
    }

    pub fn steps_per_epoch(&self) -> usize {
        let t = &self.opts.train;
        t.batches_per_epoch
            .unwrap_or_else(|| (self.data.train.len() / (t.batch_p * t.batch_k)).max(1))
    }

    fn augment_policy(&self) -> AugmentPolicy {
        let a = &self.opts.train.augment;
        AugmentPolicy {
            flip_prob: a.flip_prob,
            crop_pad: a.crop_pad,
            erase_prob: a.erase_prob,
            ..AugmentPolicy::training(self.model.config().input_size, self.erase_fill)
        }
    }

    /// Runs every remaining stage.
    pub fn run(&mut self) -> Result<Vec<StageReport>> {
        self.run_until(None)
    }

    /// Runs until `stop` (stage, completed epochs) is reached, or to the end.
    pub fn run_until(&mut self, stop: Option<Position>) -> Result<Vec<StageReport>> {
        self.prepare_logs()?;
        let mut reports = Vec::new();
        while !self.is_finished() {
            if stop.is_some_and(|s| self.position >= s) {
                break;
            }
            let plan = self.plans[(self.position.stage - 1) as usize].clone();
            if self.position.epoch >= plan.epochs {
                self.position = Position { stage: self.position.stage + 1, epoch: 0 };
                continue;
            }
            reports.push(self.run_stage(&plan, stop)?);
        }
        Ok(reports)
    }

    fn run_stage(&mut self, plan: &StagePlan, stop: Option<Position>) -> Result<StageReport> {
        let digests = |m: &ModelBundle| -> Result<BTreeMap<Component, [u8; 32]>> {
            plan.frozen.iter().map(|&c| Ok((c, m.store(c).digest()?))).collect()
        };
        let frozen_before = digests(&self.model)?;
        let mut optims: BTreeMap<Component, Optimizer> = BTreeMap::new();
        for (&c, &spec) in &plan.optimizers {
            let params = self.model.store(c).params().map(|(k, v)| (k.to_string(), v.clone())).collect();
            optims.insert(c, Optimizer::new(spec, params, plan.lr)?);
        }
        if let Some(ck) = self.resume_state.take() {
            if ck.meta.stage == plan.stage {
                for (c, o) in optims.iter_mut() {
                    o.load_state(&format!("optim.{}", c.name()), &|k| ck.get(k))?;
                }
            }
        }

        let policy = self.augment_policy();
        let steps = self.steps_per_epoch();
        let (p, k) = (self.opts.train.batch_p, self.opts.train.batch_k);
        let seed = self.opts.seed;
        let s = u64::from(plan.stage);
        let mut checkpoints = Vec::new();
        while self.position.epoch < plan.epochs {
            let epoch = self.position.epoch;
            let lr = lr_at(&self.schedule, epoch, plan.epochs, plan.lr);
            optims.values_mut().for_each(|o| o.set_lr(lr));
            let mut rows = Vec::with_capacity(steps * 10);
            for b in 0..steps {
                let key = [s, epoch as u64, b as u64];
                let batch = pk_sample(&self.data.train, p, k, &mut stream(seed, &[tag::SAMPLER, key[0], key[1], key[2]]))?;
                let x = materialize(&self.data.train, &batch, &policy, seed, &key, self.model.dtype())?;
                let mut ctx_rng = stream(seed, &[tag::STEP, key[0], key[1], key[2], 0]);
                let mut aux_rng = stream(seed, &[tag::STEP, key[0], key[1], key[2], 1]);
                let values = self.step(plan, &mut optims, &x, &batch, &mut ctx_rng, &mut aux_rng)?;
                let step = epoch * steps + b;
                if self.opts.train.divergence_guard {
                    if let Some((name, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
                        let err = Error::Diverged { stage: plan.stage, step, component: name.clone() };
                        self.save_diagnostic(plan.stage, step, &optims, &err)?;
                        return Err(err);
                    }
                }
                rows.extend(values.into_iter().map(|(name, value)| LogRow { stage: plan.stage, epoch, step, name, value }));
            }
            self.position.epoch = epoch + 1;
            let eval = if self.opts.train.eval_each_epoch && !self.data.query.is_empty() && !self.data.gallery.is_empty() {
                let metrics = evaluate_retrieval(&self.model, &self.data, true)?.report();
                Some(EpochEval { stage: plan.stage, epoch: epoch + 1, lr, metrics })
            } else {
                None
            };
            log::info!(
                "stage {} epoch {}/{} lr {lr:.2e}{}",
                plan.stage,
                epoch + 1,
                plan.epochs,
                eval.as_ref().map_or(String::new(), |e| format!(" rank1 {:.3} mAP {:.3}", e.metrics.rank1, e.metrics.map))
            );
            self.append_logs(&rows, eval.as_ref())?;
            self.log.extend(rows);
            self.evals.extend(eval);
            if let Some(dir) = self.opts.run_dir.clone().filter(|_| self.opts.train.save_checkpoints) {
                let path = dir.join(format!("stage{}", plan.stage)).join(format!("epoch{}.ckpt", epoch + 1));
                self.checkpoint(&optims, BTreeMap::new())?.save(&path)?;
                checkpoints.push(path);
            }
            if stop.is_some_and(|st| self.position >= st) {
                break;
            }
        }

        let frozen_after = digests(&self.model)?;
        let changed: Vec<Component> =
            frozen_before.iter().filter(|(c, d)| frozen_after.get(c) != Some(d)).map(|(c, _)| *c).collect();
        if !changed.is_empty() {
            return Err(Error::FrozenModified(format!("{changed:?} in stage {}", plan.stage)));
        }
        let report = StageReport {
            stage: plan.stage,
            epochs_completed: self.position.epoch,
            frozen_before,
            frozen_after,
            changed,
            checkpoints,
        };
        if self.position.epoch >= plan.epochs {
            self.position = Position { stage: plan.stage + 1, epoch: 0 };
        }
        Ok(report)
    }

    /// Snapshot of model, optimizer and moving-statistics state at the current position.
    pub fn checkpoint(
        &self,
        optims: &BTreeMap<Component, Optimizer>,
        notes: BTreeMap<String, String>,
    ) -> Result<Checkpoint> {
        let stage = self.position.stage.min(3);
        let mut ck = Checkpoint::new(CheckpointMeta {
            stage,
            epoch: self.position.epoch,
            config: self.opts.config_echo.clone(),
            notes,
        });
        ck.extend(self.model.named_state())?;
        for (c, o) in optims {
            ck.extend(o.state_tensors(&format!("optim.{}", c.name()))?)?;
        }
        ck.extend(stats_tensors(&self.stats)?)?;
        Ok(ck)
    }

    fn save_diagnostic(
        &self,
        stage: u8,
        step: usize,
        optims: &BTreeMap<Component, Optimizer>,
        err: &Error,
    ) -> Result<()> {
        let Some(dir) = &self.opts.run_dir else { return Ok(()) };
        let notes = BTreeMap::from([("diagnostic".to_string(), err.to_string())]);
        let path = dir.join(format!("stage{stage}")).join(format!("diverged_step{step}.ckpt"));
        log::error!("{err}; diagnostic checkpoint at {}", path.display());
        self.checkpoint(optims, notes)?.save(&path)
    }

    /// Restores model, statistics, position and (for the same stage) optimizer state.
    pub fn load_checkpoint(&mut self, ck: Checkpoint) -> Result<()> {
        if !(1..=3).contains(&ck.meta.stage) {
            return Err(Error::Checkpoint(format!("stage {} out of range", ck.meta.stage)));
        }
        self.model.load_state(&|k| ck.get(k))?;
        load_stats(&mut self.stats, &ck)?;
        self.position = Position { stage: ck.meta.stage, epoch: ck.meta.epoch };
        self.resume_state = Some(ck);
        Ok(())
    }

    fn prepare_logs(&mut self) -> Result<()> {
        if self.logs_ready {
            return Ok(());
        }
        self.logs_ready = true;
        let Some(dir) = &self.opts.run_dir else { return Ok(()) };
        crate::fsutil::create_dir_all(dir)?;
        let pos = self.position;
        let keep = |stage: &str, epoch: &str, completed: bool| -> bool {
            let (Ok(s), Ok(e)) = (stage.parse::<u8>(), epoch.parse::<usize>()) else { return false };
            // Log rows carry the 0-based epoch; metric rows the completed count.
            let done = if completed { e } else { e + 1 };
            Position { stage: s, epoch: done } <= pos
        };
        for (file, header, completed) in [
            (LOG_FILE, "stage,epoch,step,name,value", false),
            (METRICS_FILE, "stage,epoch,lr,rank1,rank5,rank10,map,n_query,n_dropped", true),
        ] {
            let path = dir.join(file);
            let mut text = format!("{header}\n");
            if pos > (Position { stage: 1, epoch: 0 }) {
                if let Ok(old) = std::fs::read_to_string(&path) {
                    for line in old.lines().skip(1) {
                        let mut f = line.split(',');
                        if let (Some(s), Some(e)) = (f.next(), f.next()) {
                            if keep(s, e, completed) {
                                text.push_str(line);
                                text.push('\n');
                            }
                        }
                    }
                }
            }
            crate::fsutil::write_atomic(&path, text.as_bytes())?;
        }
        Ok(())
    }

    fn append_logs(&self, rows: &[LogRow], eval: Option<&EpochEval>) -> Result<()> {
        let Some(dir) = &self.opts.run_dir else { return Ok(()) };
        let append = |file: &str, text: String| -> Result<()> {
            let path = dir.join(file);
            let mut f = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
        };
        let mut text = String::new();
        for r in rows {
            text.push_str(&format!("{},{},{},{},{}\n", r.stage, r.epoch, r.step, r.name, r.value));
        }
        append(LOG_FILE, text)?;
        if let Some(e) = eval {
            let m = &e.metrics;
            append(
                METRICS_FILE,
                format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    e.stage, e.epoch, e.lr, m.rank1, m.rank5, m.rank10, m.map, m.n_query, m.n_dropped
                ),
            )?;
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.model.config().variant
    }
}

fn stats_tensors(stats: &MovingStats) -> Result<Vec<(String, candle_core::Tensor)>> {
    let f64t = |v: &[f64]| tensor_from_f64(v.to_vec(), &[v.len()], candle_core::DType::F64);
    let mut out = vec![("stats.initialized".to_string(), f64t(&[f64::from(u8::from(stats.initialized))])?)];
    for (name, streams) in [("related", &stats.related), ("unrelated", &stats.unrelated)] {
        for (k, s) in streams.iter().enumerate() {
            out.push((format!("stats.{name}.{k}.mean"), f64t(&s.mean)?));
            out.push((format!("stats.{name}.{k}.std"), f64t(&s.std)?));
        }
    }
    Ok(out)
}

fn load_stats(stats: &mut MovingStats, ck: &Checkpoint) -> Result<()> {
    let get = |k: &str| -> Result<Vec<f64>> {
        let t = ck.get(k).ok_or_else(|| Error::Checkpoint(format!("missing `{k}`")))?;
        to_f64_vec(&t)
    };
    stats.initialized = get("stats.initialized")?.first().copied().unwrap_or(0.0) != 0.0;
    for (name, streams) in [("related", &mut stats.related), ("unrelated", &mut stats.unrelated)] {
        for (k, s) in streams.iter_mut().enumerate() {
            s.mean = get(&format!("stats.{name}.{k}.mean"))?;
            s.std = get(&format!("stats.{name}.{k}.std"))?;
        }
    }
    Ok(())
}

/// The checkpoint with the highest (stage, epoch) under `run_dir`.
pub fn latest_checkpoint(run_dir: &Path) -> Option<PathBuf> {
    let mut best: Option<(Position, PathBuf)> = None;
    for stage in 1..=3u8 {
        let Ok(entries) = std::fs::read_dir(run_dir.join(format!("stage{stage}"))) else { continue };
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            let Some(n) = name.strip_prefix("epoch").and_then(|r| r.strip_suffix(".ckpt")) else { continue };
            let Ok(epoch) = n.parse() else { continue };
            let pos = Position { stage, epoch };
            if best.as_ref().is_none_or(|b| pos > b.0) {
                best = Some((pos, e.path()));
            }
        }
    }
    best.map(|b| b.1)
}
