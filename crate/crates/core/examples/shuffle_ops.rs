//! Identity shuffling and part-level shuffling on small hand-made feature sets.
//!
//! `cargo run --example shuffle_ops`

use candle_core::{Device, Tensor};

use isgan::disentangle::{compose, part_shuffle, part_shuffle_rows, sample_mask, shuffle_registry, ReidMode, ShuffleMask};
use isgan::model::{PartFeatureSet, PartLayout};
use isgan::rng::{stream, tag};

/// Part `k` of image `img` is filled with `10·img + k`, so sources stay readable.
fn tagged(layout: &PartLayout, img: f64, batch: usize) -> isgan::Result<PartFeatureSet> {
    let parts = (0..layout.num_parts())
        .map(|k| Tensor::full(10.0 * img + k as f64, (batch, layout.per_part_dim), &Device::Cpu))
        .collect::<candle_core::Result<Vec<_>>>()?;
    PartFeatureSet::new(parts, layout.clone())
}

fn firsts(set: &PartFeatureSet) -> Vec<f64> {
    set.parts.iter().map(|t| t.get(0).and_then(|r| r.get(0)).and_then(|v| v.to_scalar()).unwrap()).collect()
}

fn main() -> isgan::Result<()> {
    let layout = PartLayout { branches: vec![1, 2, 3], per_part_dim: 2 };
    let (a, b) = (tagged(&layout, 1.0, 2)?, tagged(&layout, 2.0, 2)?);
    for mode in [ReidMode::ShortTerm, ReidMode::LongTerm] {
        println!("{mode:?} shuffleable parts: {:?}", shuffle_registry(&layout, mode));
    }

    let all = ShuffleMask::filled(&layout, ReidMode::ShortTerm, true);
    println!("all-true swap S(a, b):  {:?}", firsts(&part_shuffle(&a, &b, &all)?));
    let mask = sample_mask(&mut stream(0, &[tag::MASK]), &layout, ReidMode::ShortTerm);
    println!("random mask {:?}: {:?}", mask.bits(), firsts(&part_shuffle(&a, &b, &mask)?));
    println!("complement:             {:?}", firsts(&part_shuffle(&a, &b, &mask.complement())?));

    let long = ShuffleMask::filled(&layout, ReidMode::LongTerm, true);
    println!("long-term all-true:     {:?}", firsts(&part_shuffle(&a, &b, &long)?));

    let rows = vec![ShuffleMask::filled(&layout, ReidMode::ShortTerm, false), all];
    let mixed = part_shuffle_rows(&a, &b, &rows)?;
    println!("row-wise, row 1 swapped: part 2 column = {:?}", mixed.parts[2].to_vec2::<f64>()?);

    println!("composed a ⊕ b shape: {:?}", compose(&a, &b)?.dims());
    Ok(())
}
