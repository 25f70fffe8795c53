//! On-disk form of a dataset: one PNG per record plus `manifest.json`.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetSplits, ImageRecord, Split, SyntheticFactors};
use crate::error::{Error, Result};
use crate::fsutil::{create_dir_all, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    /// Relative to the dataset directory.
    pub path: PathBuf,
    pub identity: usize,
    pub camera_id: u32,
    pub split: Split,
    pub source_id: String,
    pub factors: Option<SyntheticFactors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// `[H, W]`.
    pub resolution: [usize; 2],
    pub train_classes: usize,
    pub test_classes: usize,
    pub records: Vec<ManifestRecord>,
}

fn to_png(img: &image::Rgb32FImage) -> RgbImage {
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get_pixel(x, y).0;
        Rgb(p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

/// Writes every record of `splits` as `<split>/<n>.png` under `dir`.
pub fn write_manifest_dataset(dir: &Path, splits: &DatasetSplits) -> Result<Manifest> {
    let all: Vec<&ImageRecord> = splits.train.iter().chain(&splits.query).chain(&splits.gallery).collect();
    let first = all.first().ok_or_else(|| Error::EmptySplit("nothing to write".into()))?;
    let resolution = [first.image.height() as usize, first.image.width() as usize];
    for split in [Split::Train, Split::Query, Split::Gallery] {
        create_dir_all(&dir.join(split.as_str()))?;
    }
    let mut counters = [0usize; 3];
    let records: Vec<ManifestRecord> = all
        .iter()
        .map(|r| {
            let slot = r.split as usize;
            let n = counters[slot];
            counters[slot] += 1;
            ManifestRecord {
                path: PathBuf::from(r.split.as_str()).join(format!("{n:06}.png")),
                identity: r.identity,
                camera_id: r.camera_id,
                split: r.split,
                source_id: r.source_id.clone(),
                factors: r.factors,
            }
        })
        .collect();
    all.par_iter()
        .zip(&records)
        .try_for_each(|(r, m)| to_png(&r.image).save(dir.join(&m.path)).map_err(Error::from))?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        resolution,
        train_classes: splits.train_classes,
        test_classes: splits.test_classes,
        records,
    };
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a directory written by [`write_manifest_dataset`].
pub fn load_manifest(dir: &Path) -> Result<DatasetSplits> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Dataset(format!("unsupported manifest version {}", manifest.version)));
    }
    let records: Vec<ImageRecord> = manifest
        .records
        .par_iter()
        .map(|m| {
            let p = dir.join(&m.path);
            Ok(ImageRecord {
                image: image::open(&p)?.to_rgb32f(),
                identity: m.identity,
                camera_id: m.camera_id,
                split: m.split,
                factors: m.factors,
                source_id: m.source_id.clone(),
                path: Some(p),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = DatasetSplits {
        train_classes: manifest.train_classes,
        test_classes: manifest.test_classes,
        ..Default::default()
    };
    for r in records {
        match r.split {
            Split::Train => out.train.push(r),
            Split::Query => out.query.push(r),
            Split::Gallery => out.gallery.push(r),
        }
    }
    if out.train.is_empty() {
        return Err(Error::EmptySplit(format!("train ({})", dir.display())));
    }
    out.validate()?;
    Ok(out)
}
