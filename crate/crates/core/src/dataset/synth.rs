//! Procedural person renderer with known generative factors.

use std::collections::{BTreeMap, HashSet};

use image::{Rgb, Rgb32FImage};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{DatasetSplits, ImageRecord, Split, SyntheticFactors};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Clothing colors. The first half are warm hues, the second half cool ones.
pub const CLOTHING_PALETTE: [[u8; 3]; 8] = [
    [220, 40, 40],
    [240, 140, 20],
    [230, 210, 30],
    [200, 40, 160],
    [40, 80, 220],
    [30, 190, 200],
    [40, 170, 60],
    [110, 50, 180],
];

/// Background colors, one per synthetic camera.
pub const BG_PALETTE: [[u8; 3]; 4] = [[60, 60, 70], [150, 140, 120], [90, 120, 90], [180, 180, 200]];

const SKIN: [u8; 3] = [230, 190, 160];
const OCCLUDER: [u8; 3] = [128, 128, 128];
const TORSO_WIDTH: [f64; 3] = [0.30, 0.40, 0.50];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_ids: usize,
    pub imgs_per_id: usize,
    /// `(H, W)`.
    pub resolution: (usize, usize),
    /// Height and width must be multiples of this.
    pub granularity: usize,
    pub occlusion_prob: f64,
}

impl SynthSpec {
    pub fn new(seed: u64, n_ids: usize, imgs_per_id: usize, resolution: (usize, usize)) -> Self {
        Self { seed, n_ids, imgs_per_id, resolution, granularity: 8, occlusion_prob: 0.2 }
    }

    fn validate(&self) -> Result<()> {
        if self.n_ids < 2 || self.imgs_per_id < 2 {
            return Err(Error::InvalidArgument(format!(
                "need n_ids >= 2 and imgs_per_id >= 2, got {} and {}",
                self.n_ids, self.imgs_per_id
            )));
        }
        let (h, w) = self.resolution;
        let g = self.granularity.max(1);
        if h == 0 || w == 0 || h % g != 0 || w % g != 0 {
            return Err(Error::InvalidArgument(format!(
                "resolution {h}x{w} is not divisible by granularity {g}"
            )));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::InvalidArgument("occlusion_prob must lie in [0,1]".into()));
        }
        Ok(())
    }
}

fn color(c: [u8; 3]) -> Rgb<f32> {
    Rgb([c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
}

fn fill_rect(img: &mut Rgb32FImage, x0: f64, y0: f64, x1: f64, y1: f64, c: Rgb<f32>) {
    let (w, h) = img.dimensions();
    let xa = x0.round().clamp(0.0, w as f64) as u32;
    let xb = x1.round().clamp(0.0, w as f64) as u32;
    let ya = y0.round().clamp(0.0, h as f64) as u32;
    let yb = y1.round().clamp(0.0, h as f64) as u32;
    for y in ya..yb {
        for x in xa..xb {
            img.put_pixel(x, y, c);
        }
    }
}

/// Draws the figure described by `f` (the occlusion bar position is `occluder_x`).
pub fn render(f: &SyntheticFactors, resolution: (usize, usize), occluder_x: u32) -> Rgb32FImage {
    let (h, w) = resolution;
    let (hf, wf) = (h as f64, w as f64);
    let mut img = Rgb32FImage::from_pixel(w as u32, h as u32, color(BG_PALETTE[f.bg_color as usize]));
    let s = f.scale;
    let cx = wf / 2.0 + f.x_offset as f64;
    let fig_h = 0.8 * hf * s;
    let top = hf / 2.0 + f.y_offset as f64 - fig_h / 2.0;

    let r = 0.08 * hf * s;
    let (hx, hy) = (cx, top + r);
    for y in 0..h as u32 {
        for x in 0..w as u32 {
            let dx = x as f64 + 0.5 - hx;
            let dy = y as f64 + 0.5 - hy;
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x, y, color(SKIN));
            }
        }
    }

    let torso_w = TORSO_WIDTH[f.body_shape as usize] * wf * s;
    let torso_top = top + 2.0 * r;
    let torso_bot = top + 0.55 * fig_h;
    fill_rect(
        &mut img,
        cx - torso_w / 2.0,
        torso_top,
        cx + torso_w / 2.0,
        torso_bot,
        color(CLOTHING_PALETTE[f.torso_color as usize]),
    );
    let leg_w = 0.8 * torso_w;
    let gap = (0.1 * leg_w).max(1.0);
    let leg_c = color(CLOTHING_PALETTE[f.leg_color as usize]);
    fill_rect(&mut img, cx - leg_w / 2.0, torso_bot, cx - gap / 2.0, top + fig_h, leg_c);
    fill_rect(&mut img, cx + gap / 2.0, torso_bot, cx + leg_w / 2.0, top + fig_h, leg_c);

    if f.occlusion {
        let bar = (wf / 8.0).max(1.0);
        let x0 = occluder_x as f64;
        fill_rect(&mut img, x0, 0.0, x0 + bar, hf, color(OCCLUDER));
    }
    img
}

/// All `(torso, leg, shape)` triples in a seed-dependent order.
fn factor_triples(seed: u64) -> Vec<(u8, u8, u8)> {
    let mut all = Vec::with_capacity(CLOTHING_PALETTE.len().pow(2) * TORSO_WIDTH.len());
    for t in 0..CLOTHING_PALETTE.len() as u8 {
        for l in 0..CLOTHING_PALETTE.len() as u8 {
            for b in 0..TORSO_WIDTH.len() as u8 {
                all.push((t, l, b));
            }
        }
    }
    all.shuffle(&mut stream(seed, &[tag::SYNTH, 0]));
    all
}

fn draw_record(spec: &SynthSpec, id: usize, n: usize, triple: (u8, u8, u8)) -> ImageRecord {
    let (h, w) = spec.resolution;
    let mut rng = stream(spec.seed, &[tag::SYNTH, 1, id as u64, n as u64]);
    let mx = (w / 8) as i32;
    let my = (h / 16) as i32;
    let camera = rng.random_range(0..BG_PALETTE.len() as u8);
    let f = SyntheticFactors {
        torso_color: triple.0,
        leg_color: triple.1,
        body_shape: triple.2,
        x_offset: rng.random_range(-mx..=mx),
        y_offset: rng.random_range(-my..=my),
        scale: f64::from(rng.random_range(700u32..=1300)) / 1000.0,
        bg_color: camera,
        occlusion: rng.random_bool(spec.occlusion_prob),
    };
    let bar = (w / 8).max(1);
    let occ_x = rng.random_range(0..=(w - bar) as u32);
    ImageRecord {
        image: render(&f, spec.resolution, occ_x),
        identity: id,
        camera_id: u32::from(camera),
        split: Split::Train,
        factors: Some(f),
        source_id: format!("{id:04}"),
        path: None,
    }
}

/// Generates `n_ids × imgs_per_id` records at the default granularity.
pub fn synth_generate(
    seed: u64,
    n_ids: usize,
    imgs_per_id: usize,
    resolution: (usize, usize),
) -> Result<Vec<ImageRecord>> {
    synth_generate_with(&SynthSpec::new(seed, n_ids, imgs_per_id, resolution))
}

pub fn synth_generate_with(spec: &SynthSpec) -> Result<Vec<ImageRecord>> {
    spec.validate()?;
    let triples = factor_triples(spec.seed);
    if spec.n_ids > triples.len() {
        log::warn!(
            "{} identities exceed {} distinct factor triples; triples will repeat",
            spec.n_ids,
            triples.len()
        );
    }
    Ok((0..spec.n_ids)
        .flat_map(|id| (0..spec.imgs_per_id).map(move |n| (id, n)))
        .map(|(id, n)| draw_record(spec, id, n, triples[id % triples.len()]))
        .collect())
}

/// Pairs of distinct identities that share a factor triple.
pub fn factor_collisions(records: &[ImageRecord]) -> Vec<(usize, usize)> {
    let mut by_triple: BTreeMap<(u8, u8, u8), Vec<usize>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records {
        if let Some(f) = r.factors {
            if seen.insert(r.identity) {
                by_triple.entry(f.identity_triple()).or_default().push(r.identity);
            }
        }
    }
    let mut out = Vec::new();
    for ids in by_triple.values() {
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                out.push((*a.min(b), *a.max(b)));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Generates `n_train + n_test` identities and splits them by identity.
///
/// Test identities get their own dense labels; for each of them the first
/// `queries_per_id` images become queries and the rest gallery.
pub fn synth_splits(spec: &SynthSpec, n_test: usize, queries_per_id: usize) -> Result<DatasetSplits> {
    if n_test > 0 && (queries_per_id == 0 || queries_per_id >= spec.imgs_per_id) {
        return Err(Error::InvalidArgument(format!(
            "queries_per_id must lie in [1, {}), got {queries_per_id}",
            spec.imgs_per_id
        )));
    }
    let total = SynthSpec { n_ids: spec.n_ids + n_test, ..spec.clone() };
    let records = synth_generate_with(&total)?;
    let mut out = DatasetSplits {
        train_classes: spec.n_ids,
        test_classes: n_test,
        ..Default::default()
    };
    for mut r in records {
        if r.identity < spec.n_ids {
            out.train.push(r);
            continue;
        }
        let k = out.query.iter().chain(&out.gallery).filter(|q| q.source_id == r.source_id).count();
        r.identity -= spec.n_ids;
        if k < queries_per_id {
            r.split = Split::Query;
            out.query.push(r);
        } else {
            r.split = Split::Gallery;
            out.gallery.push(r);
        }
    }
    out.validate()?;
    Ok(out)
}
