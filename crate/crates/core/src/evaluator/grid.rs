//! Image grids from recombined features of image pairs.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, Rgb32FImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::dataset::{images_to_tensor, resize, tensor_to_image};
use crate::disentangle::{compose, part_shuffle, ReidMode, ShuffleMask};
use crate::error::{Error, Result};
use crate::model::{ModelBundle, PartFeatureSet};
use crate::nn::Ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `G(φR1⊕φU1)`, `G(φR2⊕φU2)`.
    Recon,
    /// Identity-related features alone.
    ROnly,
    /// Identity-unrelated features alone.
    UOnly,
    /// `G(lerp(φR1, φR2, α) ⊕ φU1)` for each α.
    InterpR,
    /// `G(φR1 ⊕ lerp(φU1, φU2, α))` for each α.
    InterpU,
    /// All local parts swapped between the pair; globals stay.
    PartSwap,
}

impl GridMode {
    pub const ALL: [GridMode; 6] = [
        GridMode::Recon,
        GridMode::ROnly,
        GridMode::UOnly,
        GridMode::InterpR,
        GridMode::InterpU,
        GridMode::PartSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridMode::Recon => "recon",
            GridMode::ROnly => "r_only",
            GridMode::UOnly => "u_only",
            GridMode::InterpR => "interp_r",
            GridMode::InterpU => "interp_u",
            GridMode::PartSwap => "part_swap",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(name))
    }
}

/// Rows are pairs; the first two columns are the source images.
#[derive(Debug, Clone)]
pub struct GenerationGrid {
    pub cells: Vec<Vec<Rgb32FImage>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

const GAP: u32 = 2;

impl GenerationGrid {
    pub fn to_image(&self) -> Result<RgbImage> {
        let first = self
            .cells
            .first()
            .and_then(|r| r.first())
            .ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
        let (w, h) = first.dimensions();
        let cols = self.col_labels.len() as u32;
        let rows = self.cells.len() as u32;
        let mut out = RgbImage::from_pixel(cols * (w + GAP) + GAP, rows * (h + GAP) + GAP, Rgb([255; 3]));
        for (r, row) in self.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                let (x0, y0) = (GAP + c as u32 * (w + GAP), GAP + r as u32 * (h + GAP));
                for (x, y, p) in cell.enumerate_pixels() {
                    out.put_pixel(x0 + x, y0 + y, Rgb(p.0.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)));
                }
            }
        }
        Ok(out)
    }

    /// Writes the PNG and a `<name>.txt` sidecar with row and column labels.
    pub fn save(&self, png: &Path) -> Result<()> {
        if let Some(dir) = png.parent().filter(|d| !d.as_os_str().is_empty()) {
            crate::fsutil::create_dir_all(dir)?;
        }
        self.to_image()?.save(png)?;
        let mut text = String::new();
        for (i, l) in self.row_labels.iter().enumerate() {
            let _ = writeln!(text, "row {i}: {l}");
        }
        for (i, l) in self.col_labels.iter().enumerate() {
            let _ = writeln!(text, "col {i}: {l}");
        }
        crate::fsutil::write_atomic(&png.with_extension("txt"), text.as_bytes())
    }
}

struct Encoded {
    r: PartFeatureSet,
    u: PartFeatureSet,
}

fn encode(model: &ModelBundle, images: &[&Rgb32FImage]) -> Result<Encoded> {
    let [h, w] = model.config().input_size;
    let resized: Vec<_> = images.iter().map(|i| resize(i, [h, w])).collect();
    let x = images_to_tensor(&resized.iter().collect::<Vec<_>>(), model.dtype())?;
    let mut ctx = Ctx::eval();
    let fmap = model.backbone_forward(&x, &mut ctx)?;
    Ok(Encoded {
        r: model.encode_parts(&fmap, &mut ctx)?,
        u: model.encode_unrelated(&fmap, &mut ctx)?.features,
    })
}

/// Label-free, noise-free generation in inference mode.
fn render(model: &ModelBundle, r: &PartFeatureSet, u: &PartFeatureSet) -> Result<Vec<Rgb32FImage>> {
    let b = r.batch_size();
    let composed = compose(r, u)?;
    let onehot = model.one_hot(&vec![None; b])?;
    let out = model.generate(&composed, &model.zero_noise(b)?, &onehot, &mut Ctx::eval())?;
    (0..b).map(|i| tensor_to_image(&out.get(i)?)).collect()
}

/// Builds the grid for `pairs` in `mode`; `alphas` applies to the interpolation modes.
pub fn generation_grid(
    model: &ModelBundle,
    pairs: &[(&Rgb32FImage, &Rgb32FImage)],
    mode: GridMode,
    alphas: &[f64],
) -> Result<GenerationGrid> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no image pairs".into()));
    }
    if matches!(mode, GridMode::InterpR | GridMode::InterpU) && alphas.is_empty() {
        return Err(Error::InvalidArgument("interpolation needs at least one alpha".into()));
    }
    let ones: Vec<&Rgb32FImage> = pairs.iter().map(|p| p.0).collect();
    let twos: Vec<&Rgb32FImage> = pairs.iter().map(|p| p.1).collect();
    let e1 = encode(model, &ones)?;
    let e2 = encode(model, &twos)?;

    let (columns, col_labels): (Vec<Vec<Rgb32FImage>>, Vec<String>) = match mode {
        GridMode::Recon => (
            vec![render(model, &e1.r, &e1.u)?, render(model, &e2.r, &e2.u)?],
            vec!["G(R1+U1)".into(), "G(R2+U2)".into()],
        ),
        GridMode::ROnly => (
            vec![render(model, &e1.r, &e1.u.zeros_like()?)?, render(model, &e2.r, &e2.u.zeros_like()?)?],
            vec!["G(R1)".into(), "G(R2)".into()],
        ),
        GridMode::UOnly => (
            vec![render(model, &e1.r.zeros_like()?, &e1.u)?, render(model, &e2.r.zeros_like()?, &e2.u)?],
            vec!["G(U1)".into(), "G(U2)".into()],
        ),
        GridMode::InterpR => {
            let cols = alphas
                .iter()
                .map(|&a| render(model, &e1.r.lerp(&e2.r, a)?, &e1.u))
                .collect::<Result<_>>()?;
            (cols, alphas.iter().map(|a| format!("R a={a}")).collect())
        }
        GridMode::InterpU => {
            let cols = alphas
                .iter()
                .map(|&a| render(model, &e1.r, &e1.u.lerp(&e2.u, a)?))
                .collect::<Result<_>>()?;
            (cols, alphas.iter().map(|a| format!("U a={a}")).collect())
        }
        GridMode::PartSwap => {
            let mask = ShuffleMask::filled(model.layout(), ReidMode::ShortTerm, true);
            (
                vec![
                    render(model, &part_shuffle(&e1.r, &e2.r, &mask)?, &e1.u)?,
                    render(model, &part_shuffle(&e2.r, &e1.r, &mask)?, &e2.u)?,
                ],
                vec!["G(S(R1,R2)+U1)".into(), "G(S(R2,R1)+U2)".into()],
            )
        }
    };

    let [h, w] = model.config().input_size;
    let cells = (0..pairs.len())
        .map(|i| {
            let mut row = vec![resize(ones[i], [h, w]), resize(twos[i], [h, w])];
            row.extend(columns.iter().map(|c| c[i].clone()));
            row
        })
        .collect();
    let mut labels = vec!["I1".to_string(), "I2".to_string()];
    labels.extend(col_labels);
    Ok(GenerationGrid {
        cells,
        row_labels: (0..pairs.len()).map(|i| format!("pair {i}")).collect(),
        col_labels: labels,
    })
}
