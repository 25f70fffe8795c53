//! Embedding matrices as CSV: `id,cam,f0..f{D-1}`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub cam: u32,
    pub features: Vec<f64>,
}

/// Writes one row per embedding; an empty input gives a header-only file.
///
/// `dim` sets the header width when `rows` is empty.
pub fn export_embeddings(path: &Path, rows: &[EmbeddingRow], dim: usize) -> Result<()> {
    let dim = rows.first().map_or(dim, |r| r.features.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "cam".to_string()];
    header.extend((0..dim).map(|d| format!("f{d}")));
    w.write_record(&header)?;
    for r in rows {
        if r.features.len() != dim {
            return Err(Error::InvalidArgument("embedding rows differ in length".into()));
        }
        let mut rec = vec![r.id.clone(), r.cam.to_string()];
        // `{}` on f64 prints the shortest representation that parses back exactly.
        rec.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "cam" {
        return Err(Error::InvalidArgument(format!("{} is not an embeddings file", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::InvalidArgument(format!("malformed row in {}", path.display()));
        out.push(EmbeddingRow {
            id: rec[0].to_string(),
            cam: rec[1].parse().map_err(|_| bad())?,
            features: rec.iter().skip(2).map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}
