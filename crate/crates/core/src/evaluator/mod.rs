//! Feature extraction, retrieval metrics, linear probes, embedding export and
//! generated-image grids.

mod export;
mod grid;
mod probe;
mod retrieval;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

pub use export::{export_embeddings, read_embeddings, EmbeddingRow};
pub use grid::{generation_grid, GenerationGrid, GridMode};
pub use probe::{linear_probe, ProbeAttribute, ProbeOutcome, ProbeSpec};
pub use retrieval::{euclidean, ranking, retrieval_metrics, Labelled, MetricsReport, RetrievalResult};

use crate::dataset::{images_to_tensor, resize, DatasetSplits, ImageRecord};
use crate::error::Result;
use crate::model::ModelBundle;
use crate::nn::ops::to_f64_vec;
use crate::rng::{stream, tag};

/// Which representation to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Related,
    Unrelated,
}

pub const DEFAULT_EVAL_BATCH: usize = 64;

/// Resizes record images to the model input and stacks them.
pub fn records_to_tensor(model: &ModelBundle, records: &[&ImageRecord]) -> Result<Tensor> {
    let [h, w] = model.config().input_size;
    let resized: Vec<_> = records.iter().map(|r| resize(&r.image, [h, w])).collect();
    let refs: Vec<_> = resized.iter().collect();
    images_to_tensor(&refs, model.dtype())
}

/// One row of `K·p` features per record, computed in inference mode.
pub fn extract_features(
    model: &ModelBundle,
    records: &[ImageRecord],
    kind: FeatureKind,
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(records.len());
    let refs: Vec<&ImageRecord> = records.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let x = records_to_tensor(model, chunk)?;
        let f = match kind {
            FeatureKind::Related => model.extract_related(&x)?,
            FeatureKind::Unrelated => model.extract_unrelated(&x)?,
        };
        let dim = f.dim(1)?;
        let flat = to_f64_vec(&f.to_dtype(DType::F64)?)?;
        out.extend(flat.chunks(dim).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Query-vs-gallery retrieval on identity-related features.
pub fn evaluate_retrieval(model: &ModelBundle, data: &DatasetSplits, filter: bool) -> Result<RetrievalResult> {
    let qf = extract_features(model, &data.query, FeatureKind::Related, DEFAULT_EVAL_BATCH)?;
    let gf = extract_features(model, &data.gallery, FeatureKind::Related, DEFAULT_EVAL_BATCH)?;
    let ids = |r: &[ImageRecord]| r.iter().map(|x| x.identity).collect::<Vec<_>>();
    let cams = |r: &[ImageRecord]| r.iter().map(|x| x.camera_id).collect::<Vec<_>>();
    let (qi, qc, gi, gc) = (ids(&data.query), cams(&data.query), ids(&data.gallery), cams(&data.gallery));
    retrieval_metrics(Labelled::new(&qf, &qi, &qc)?, Labelled::new(&gf, &gi, &gc)?, filter)
}

/// Probe accuracies of both representations for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub attribute: String,
    pub accuracy_r: f64,
    pub accuracy_u: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub val_prior: f64,
}

/// Probes identity-related and -unrelated features of `records` on `attribute`.
///
/// Both probes use the same split and shuffling stream.
pub fn probe_attribute(
    model: &ModelBundle,
    records: &[ImageRecord],
    attribute: ProbeAttribute,
    spec: &ProbeSpec,
    seed: u64,
) -> Result<ProbeReport> {
    let labels = attribute.labels(records)?;
    let fr = extract_features(model, records, FeatureKind::Related, DEFAULT_EVAL_BATCH)?;
    let fu = extract_features(model, records, FeatureKind::Unrelated, DEFAULT_EVAL_BATCH)?;
    let r = linear_probe(&fr, &labels, spec, &mut stream(seed, &[tag::PROBE]))?;
    let u = linear_probe(&fu, &labels, spec, &mut stream(seed, &[tag::PROBE]))?;
    Ok(ProbeReport {
        attribute: attribute.name().to_string(),
        accuracy_r: r.accuracy,
        accuracy_u: u.accuracy,
        n_train: r.n_train,
        n_val: r.n_val,
        val_prior: r.val_prior,
    })
}
