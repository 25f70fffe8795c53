//! Run configuration: a strict JSON document plus dotted `key=value` overrides.
//!
//! Every field has a default, so `{}` is a valid configuration. Unknown keys
//! are rejected. Defaults that depend on the variant (the loss weights) are
//! filled in after `variant` is known, and user values are merged over them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::{
    load_celeb_layout, load_manifest, load_market_layout, synth_splits, DatasetSplits, SplitSpec, SynthSpec,
};
use crate::disentangle::ReidMode;
use crate::error::{Error, Result};
use crate::evaluator::ProbeSpec;
use crate::losses::LossWeights;
use crate::model::{ModelConfig, Variant};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Generated in memory from `synth`.
    Synth,
    /// Directory written by the `synth` command.
    Manifest,
    Market,
    Celeb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub n_ids: usize,
    pub imgs_per_id: usize,
    /// Extra identities held out for query/gallery.
    pub n_test_ids: usize,
    pub queries_per_id: usize,
    /// `[H, W]`.
    pub resolution: [usize; 2],
    pub granularity: usize,
    pub occlusion_prob: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_ids: 20,
            imgs_per_id: 16,
            n_test_ids: 20,
            queries_per_id: 2,
            resolution: [64, 32],
            granularity: 8,
            occlusion_prob: 0.2,
        }
    }
}

impl SynthParams {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            granularity: self.granularity,
            occlusion_prob: self.occlusion_prob,
            ..SynthSpec::new(seed, self.n_ids, self.imgs_per_id, (self.resolution[0], self.resolution[1]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Root directory for every kind except `synth`.
    pub path: Option<PathBuf>,
    pub splits: SplitSpec,
    pub synth: SynthParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { kind: DatasetKind::Synth, path: None, splits: SplitSpec::default(), synth: SynthParams::default() }
    }
}

impl DatasetConfig {
    /// Loads or generates the dataset; synthetic data depends only on `seed`.
    pub fn load(&self, seed: u64) -> Result<DatasetSplits> {
        let path = || {
            self.path
                .as_deref()
                .ok_or_else(|| Error::Dataset(format!("dataset kind {:?} needs `dataset.path`", self.kind)))
        };
        match self.kind {
            DatasetKind::Synth => synth_splits(&self.synth.spec(seed), self.synth.n_test_ids, self.synth.queries_per_id),
            DatasetKind::Manifest => load_manifest(path()?),
            DatasetKind::Market => load_market_layout(path()?, &self.splits),
            DatasetKind::Celeb => load_celeb_layout(path()?, &self.splits),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub variant: Variant,
    pub mode: ReidMode,
    pub dataset: DatasetConfig,
    /// Architecture, including `layout` and `input_size` (the resolution).
    pub model: ModelConfig,
    pub weights: LossWeights,
    /// Schedule, batch and optimisation settings, including stage overrides.
    pub train: TrainConfig,
    pub probe: ProbeSpec,
    /// Root for every artifact; runs live under `<out_dir>/runs/<name>`.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::default_for(Variant::Dc)
    }
}

pub const RESOLVED_FILE: &str = "config_resolved.json";

impl RunConfig {
    pub fn default_for(variant: Variant) -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            variant,
            mode: ReidMode::ShortTerm,
            dataset: DatasetConfig::default(),
            model: ModelConfig { variant, ..ModelConfig::default() },
            weights: LossWeights::for_variant(variant),
            train: TrainConfig::default(),
            probe: ProbeSpec::default(),
            out_dir: PathBuf::from("."),
        }
    }

    /// Merges `user` over the defaults for its variant and validates the result.
    pub fn from_value(user: Value) -> Result<Self> {
        if !user.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let variant: Variant = match user.get("variant") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("variant: {e}")))?,
            None => Variant::default(),
        };
        let mut base = serde_json::to_value(Self::default_for(variant))?;
        merge(&mut base, user);
        let mut cfg: RunConfig = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.variant = cfg.variant;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any), applies `key=value` overrides, then resolves.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut user = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        Self::from_value(user)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid run name `{}`", self.name)));
        }
        self.weights.validate()?;
        self.train.validate()?;
        self.model.layout.validate()?;
        self.train.plans(self.mode, &self.weights)?;
        if self.dataset.kind == DatasetKind::Synth && self.dataset.synth.resolution != self.model.input_size {
            log::warn!(
                "synthetic resolution {:?} differs from model input {:?}; images will be resized",
                self.dataset.synth.resolution,
                self.model.input_size
            );
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join("runs").join(&self.name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `config_resolved.json` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_FILE);
        crate::fsutil::write_atomic(&path, self.to_json()?.as_bytes())?;
        Ok(path)
    }
}

/// Recursively overlays `over` onto `base`; non-object values replace.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    for p in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .expect("object")
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if !node.is_object() {
        *node = Value::Object(Map::new());
    }
    node.as_object_mut().expect("object").insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
