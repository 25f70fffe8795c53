//! Part layout arithmetic and the per-part feature vectors of one encoder pass.
//!
//! `cargo run --example part_features`

use isgan::dataset::{images_to_tensor, synth_generate};
use isgan::model::{strip_windows, ModelBundle, ModelConfig, PartLayout, StripPolicy};
use isgan::nn::Ctx;

fn main() -> isgan::Result<()> {
    for branches in [vec![1, 2, 3], vec![1, 2], vec![1, 4]] {
        let layout = PartLayout { branches: branches.clone(), per_part_dim: 256 };
        println!("branches {branches:?}: K = {}, total dim {}", layout.num_parts(), layout.total_dim());
        for slot in layout.slots() {
            print!(" {}:{:?}", slot.branch, slot.kind);
        }
        println!();
    }
    println!("3 strips over a map of height 8, adaptive: {:?}", strip_windows(8, 3, StripPolicy::Adaptive)?);
    println!("3 strips over a map of height 9, exact: {:?}", strip_windows(9, 3, StripPolicy::Exact)?);

    let model = ModelBundle::new(ModelConfig::default(), 10, 0)?;
    let records = synth_generate(0, 2, 2, (64, 32))?;
    let imgs: Vec<_> = records.iter().map(|r| &r.image).collect();
    let x = images_to_tensor(&imgs, model.dtype())?;
    let mut ctx = Ctx::eval();
    let fmap = model.backbone_forward(&x, &mut ctx)?;
    println!("backbone map {:?}", fmap.dims());
    let phi_r = model.encode_parts(&fmap, &mut ctx)?;
    let phi_u = model.encode_unrelated(&fmap, &mut ctx)?.features;
    for (k, (r, u)) in phi_r.parts.iter().zip(&phi_u.parts).enumerate() {
        println!("part {k}: phi_R {:?}, phi_U {:?}", r.dims(), u.dims());
    }
    Ok(())
}
