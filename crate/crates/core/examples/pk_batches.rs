//! Identity-balanced P×K sampling with anchor/positive pairing and training
//! augmentation. Saves the augmented batch as a PNG strip.
//!
//! `cargo run --example pk_batches`

use image::{GenericImage, RgbImage};

use isgan::dataset::{augment, pk_sample, synth_generate, AugmentPolicy};
use isgan::rng::{stream, tag};

fn main() -> isgan::Result<()> {
    let records = synth_generate(3, 12, 6, (64, 32))?;
    let batch = pk_sample(&records, 4, 4, &mut stream(3, &[tag::SAMPLER, 0]))?;
    println!("labels: {:?}", batch.labels);
    for (slot, (a, p)) in batch.pairs.iter().enumerate().take(6) {
        println!("slot {slot}: anchor {a} (id {}) / positive {p} (id {})", batch.labels[*a], batch.labels[*p]);
    }

    let policy = AugmentPolicy::training([64, 32], [0.5; 3]);
    let mut strip = RgbImage::new(32 * batch.len() as u32, 64);
    for (slot, &ri) in batch.record_indices.iter().enumerate() {
        let img = augment(&records[ri].image, &mut stream(3, &[tag::AUGMENT, slot as u64]), &policy);
        let rgb = image::DynamicImage::ImageRgb32F(img).to_rgb8();
        strip.copy_from(&rgb, 32 * slot as u32, 0).expect("fits");
    }
    let out = std::env::temp_dir().join("isgan_pk_batch.png");
    strip.save(&out).expect("png");
    println!("augmented batch saved to {}", out.display());
    Ok(())
}
