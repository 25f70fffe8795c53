//! Resize, horizontal flip, pad-and-crop and random erasing.

use image::imageops::{self, FilterType};
use image::{Rgb, Rgb32FImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    /// Output `[H, W]`.
    pub target: [usize; 2],
    pub flip_prob: f64,
    /// Zero padding on each side as a fraction of the side length; 0 disables cropping.
    pub crop_pad: f64,
    pub erase_prob: f64,
    /// Erased area as a fraction of the image, `[min, max]`.
    pub erase_area: [f64; 2],
    /// Erased rectangle aspect ratio `h / w`, `[min, max]`.
    pub erase_aspect: [f64; 2],
    /// Per-channel fill value for erased pixels.
    pub erase_fill: [f32; 3],
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::training([64, 32], [0.5; 3])
    }
}

impl AugmentPolicy {
    /// Pure resize to `target`.
    pub fn identity(target: [usize; 2]) -> Self {
        Self {
            target,
            flip_prob: 0.0,
            crop_pad: 0.0,
            erase_prob: 0.0,
            erase_area: [0.02, 0.4],
            erase_aspect: [0.3, 3.3],
            erase_fill: [0.0; 3],
        }
    }

    /// Flip 0.5, 10% pad-crop, erasing 0.5 filled with `mean`.
    pub fn training(target: [usize; 2], mean: [f32; 3]) -> Self {
        Self {
            flip_prob: 0.5,
            crop_pad: 0.1,
            erase_prob: 0.5,
            erase_fill: mean,
            ..Self::identity(target)
        }
    }
}

/// Bilinear resize to `[H, W]`, clamped to `[0,1]`.
pub fn resize(image: &Rgb32FImage, target: [usize; 2]) -> Rgb32FImage {
    let (w, h) = (target[1] as u32, target[0] as u32);
    if image.dimensions() == (w, h) {
        return image.clone();
    }
    let mut out = imageops::resize(image, w, h, FilterType::Triangle);
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}

fn pad_crop(image: &Rgb32FImage, frac: f64, rng: &mut impl Rng) -> Rgb32FImage {
    let (w, h) = image.dimensions();
    let pw = (frac * w as f64).round() as i64;
    let ph = (frac * h as f64).round() as i64;
    if pw == 0 && ph == 0 {
        return image.clone();
    }
    let ox = rng.random_range(0..=2 * pw) - pw;
    let oy = rng.random_range(0..=2 * ph) - ph;
    Rgb32FImage::from_fn(w, h, |x, y| {
        let sx = x as i64 + ox;
        let sy = y as i64 + oy;
        if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
            Rgb([0.0; 3])
        } else {
            *image.get_pixel(sx as u32, sy as u32)
        }
    })
}

fn erase(image: &mut Rgb32FImage, policy: &AugmentPolicy, rng: &mut impl Rng) {
    let (w, h) = image.dimensions();
    let area = (w * h) as f64;
    let (la, lb) = (policy.erase_aspect[0].ln(), policy.erase_aspect[1].ln());
    for _ in 0..100 {
        let target = area * rng.random_range(policy.erase_area[0]..=policy.erase_area[1]);
        let aspect = rng.random_range(la..=lb).exp();
        let eh = (target * aspect).sqrt().round() as u32;
        let ew = (target / aspect).sqrt().round() as u32;
        if eh == 0 || ew == 0 || eh >= h || ew >= w {
            continue;
        }
        let y0 = rng.random_range(0..=h - eh);
        let x0 = rng.random_range(0..=w - ew);
        let fill = Rgb(policy.erase_fill);
        for y in y0..y0 + eh {
            for x in x0..x0 + ew {
                image.put_pixel(x, y, fill);
            }
        }
        return;
    }
}

/// Resize, then flip, pad-crop and erase according to `policy`.
pub fn augment(image: &Rgb32FImage, rng: &mut impl Rng, policy: &AugmentPolicy) -> Rgb32FImage {
    let mut out = resize(image, policy.target);
    if policy.flip_prob > 0.0 && rng.random_bool(policy.flip_prob.min(1.0)) {
        imageops::flip_horizontal_in_place(&mut out);
    }
    if policy.crop_pad > 0.0 {
        out = pad_crop(&out, policy.crop_pad, rng);
    }
    if policy.erase_prob > 0.0 && rng.random_bool(policy.erase_prob.min(1.0)) {
        erase(&mut out, policy, rng);
    }
    out
}
