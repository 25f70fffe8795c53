//! Person image records, folder loaders, the procedural factor dataset,
//! augmentation, and identity-balanced batch sampling.

mod augment;
mod loader;
mod manifest;
mod sampler;
mod synth;

use std::path::PathBuf;

use candle_core::{DType, Device, Tensor};
use image::Rgb32FImage;
use serde::{Deserialize, Serialize};

pub use augment::{augment, resize, AugmentPolicy};
pub use loader::{load_celeb_layout, load_market_layout, parse_market_filename, SplitSpec};
pub use manifest::{load_manifest, write_manifest_dataset, Manifest, ManifestRecord, MANIFEST_FILE};
pub use sampler::{materialize, pk_sample, shuffled_indices, PkBatch};
pub use synth::{
    factor_collisions, render, synth_generate, synth_generate_with, synth_splits, SynthSpec,
    BG_PALETTE, CLOTHING_PALETTE,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

/// Ground-truth generative factors of a procedurally rendered person.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFactors {
    pub torso_color: u8,
    pub leg_color: u8,
    pub body_shape: u8,
    pub x_offset: i32,
    pub y_offset: i32,
    /// Figure scale in `[0.7, 1.3]`, quantised to 1e-3.
    pub scale: f64,
    pub bg_color: u8,
    pub occlusion: bool,
}

impl SyntheticFactors {
    /// The identity-determined part of the factors.
    pub fn identity_triple(&self) -> (u8, u8, u8) {
        (self.torso_color, self.leg_color, self.body_shape)
    }
}

/// One labelled person image.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    /// `H×W×3` pixels in `[0,1]`.
    pub image: Rgb32FImage,
    /// Dense identity label in `[0, C)` for the record's split role.
    pub identity: usize,
    pub camera_id: u32,
    pub split: Split,
    /// Present only for procedurally generated records.
    pub factors: Option<SyntheticFactors>,
    /// Identity string before dense remapping (kept for reporting).
    pub source_id: String,
    pub path: Option<PathBuf>,
}

/// Train / query / gallery records with their identity counts.
///
/// Query and gallery share one dense id space; the training split has its own.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplits {
    pub train: Vec<ImageRecord>,
    pub query: Vec<ImageRecord>,
    pub gallery: Vec<ImageRecord>,
    pub train_classes: usize,
    pub test_classes: usize,
}

impl DatasetSplits {
    pub fn validate(&self) -> Result<()> {
        for (name, recs, c) in [
            ("train", &self.train, self.train_classes),
            ("query", &self.query, self.test_classes),
            ("gallery", &self.gallery, self.test_classes),
        ] {
            if let Some(r) = recs.iter().find(|r| r.identity >= c) {
                return Err(Error::Dataset(format!(
                    "{name} record `{}` has identity {} >= {c}",
                    r.source_id, r.identity
                )));
            }
        }
        Ok(())
    }
}

/// Stacks `H×W×3` images into a `[B, 3, H, W]` tensor.
pub fn images_to_tensor(images: &[&Rgb32FImage], dtype: DType) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("no images to stack".into()))?;
    let (w, h) = first.dimensions();
    let mut data = Vec::with_capacity(images.len() * 3 * (w * h) as usize);
    for img in images {
        if img.dimensions() != (w, h) {
            return Err(Error::InvalidArgument(format!(
                "image size {:?} differs from {:?}",
                img.dimensions(),
                (w, h)
            )));
        }
        let raw = img.as_raw();
        for c in 0..3 {
            data.extend(raw.iter().skip(c).step_by(3).copied());
        }
    }
    let t = Tensor::from_vec(data, (images.len(), 3, h as usize, w as usize), &Device::Cpu)?;
    Ok(t.to_dtype(dtype)?)
}

/// Converts one `[3, H, W]` (or `[1, 3, H, W]`) tensor in `[0,1]` back to an image.
pub fn tensor_to_image(t: &Tensor) -> Result<Rgb32FImage> {
    let t = if t.rank() == 4 { t.squeeze(0)? } else { t.clone() };
    let (c, h, w) = t.dims3()?;
    if c != 3 {
        return Err(Error::InvalidArgument(format!("expected 3 channels, got {c}")));
    }
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let plane = h * w;
    let mut data = vec![0f32; plane * 3];
    for ch in 0..3 {
        for i in 0..plane {
            data[i * 3 + ch] = v[ch * plane + i].clamp(0.0, 1.0);
        }
    }
    Rgb32FImage::from_raw(w as u32, h as u32, data)
        .ok_or_else(|| Error::InvalidArgument("bad image buffer".into()))
}
