//! Folder-convention loaders for real person datasets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::Rgb32FImage;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DatasetSplits, ImageRecord, Split};
use crate::error::{Error, Result};

/// Subdirectory names of the three split roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: String,
    pub query: String,
    pub gallery: String,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: "bounding_box_train".into(),
            query: "query".into(),
            gallery: "bounding_box_test".into(),
        }
    }
}

/// Parses `{id}_c{cam}...` into `(id, cam)`.
pub fn parse_market_filename(name: &str) -> Option<(i64, u32)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^(-?\d+)_c(\d+)").expect("valid regex"));
    let caps = re.captures(name)?;
    Some((caps[1].parse().ok()?, caps[2].parse().ok()?))
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        .unwrap_or(false)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && is_image(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn read_image(path: &Path) -> Result<Rgb32FImage> {
    Ok(image::open(path)?.to_rgb32f())
}

/// `(path, raw id, camera)` entries before dense remapping.
type RawEntry = (PathBuf, String, u32);

fn market_entries(dir: &Path) -> Result<Vec<RawEntry>> {
    let mut out = Vec::new();
    let mut junk = 0usize;
    for p in list_images(dir)? {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match parse_market_filename(name) {
            Some((id, _)) if id <= 0 => junk += 1,
            Some((id, cam)) => out.push((p.clone(), id.to_string(), cam)),
            None => log::warn!("skipping `{}`: name does not match `{{id}}_c{{cam}}`", p.display()),
        }
    }
    if junk > 0 {
        log::info!("{}: dropped {junk} junk/distractor images", dir.display());
    }
    Ok(out)
}

fn celeb_entries(dir: &Path) -> Result<Vec<RawEntry>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            subdirs.push(p);
        }
    }
    subdirs.sort();
    let mut out = Vec::new();
    for sub in subdirs {
        let id = sub.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        for p in list_images(&sub)? {
            out.push((p, id.clone(), 0));
        }
    }
    Ok(out)
}

/// Orders raw ids numerically when they all parse, lexically otherwise.
fn dense_map<'a>(ids: impl Iterator<Item = &'a String>) -> BTreeMap<String, usize> {
    let mut uniq: Vec<&String> = ids.collect();
    uniq.sort_by(|a, b| match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    uniq.dedup();
    uniq.into_iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
}

fn build(entries: Vec<RawEntry>, split: Split, map: &BTreeMap<String, usize>) -> Result<Vec<ImageRecord>> {
    entries
        .into_par_iter()
        .map(|(path, id, cam)| {
            Ok(ImageRecord {
                image: read_image(&path)?,
                identity: map[&id],
                camera_id: cam,
                split,
                factors: None,
                source_id: id,
                path: Some(path),
            })
        })
        .collect()
}

fn load_with(
    root: &Path,
    spec: &SplitSpec,
    entries: fn(&Path) -> Result<Vec<RawEntry>>,
) -> Result<DatasetSplits> {
    let mut raw = Vec::new();
    for (name, dir) in [("train", &spec.train), ("query", &spec.query), ("gallery", &spec.gallery)] {
        let path = root.join(dir);
        if !path.is_dir() {
            return Err(Error::Dataset(format!("missing {name} directory {}", path.display())));
        }
        let e = entries(&path)?;
        if e.is_empty() {
            return Err(Error::EmptySplit(format!("{name} ({})", path.display())));
        }
        raw.push(e);
    }
    let gallery = raw.pop().expect("three splits");
    let query = raw.pop().expect("three splits");
    let train = raw.pop().expect("three splits");

    let train_map = dense_map(train.iter().map(|e| &e.1));
    let test_map = dense_map(query.iter().chain(&gallery).map(|e| &e.1));
    let out = DatasetSplits {
        train_classes: train_map.len(),
        test_classes: test_map.len(),
        train: build(train, Split::Train, &train_map)?,
        query: build(query, Split::Query, &test_map)?,
        gallery: build(gallery, Split::Gallery, &test_map)?,
    };
    out.validate()?;
    Ok(out)
}

/// Loads a Market-1501-style root (`{id}_c{cam}...` filenames).
///
/// Identities are densely remapped per role: training on its own, query and
/// gallery jointly. Ids ≤ 0 (junk and distractors) are dropped.
pub fn load_market_layout(root: &Path, spec: &SplitSpec) -> Result<DatasetSplits> {
    load_with(root, spec, market_entries)
}

/// Loads a layout with one subdirectory per identity under each split; camera is 0.
pub fn load_celeb_layout(root: &Path, spec: &SplitSpec) -> Result<DatasetSplits> {
    load_with(root, spec, celeb_entries)
}
