//! Image grids from recombined features: reconstruction, φ_R or φ_U alone,
//! interpolation of either representation and local part swaps.
//!
//! `cargo run --release --example generation_grid -- [checkpoint]`

use isgan::checkpoint::Checkpoint;
use isgan::dataset::synth_generate;
use isgan::evaluator::{generation_grid, GridMode};
use isgan::model::{ModelBundle, ModelConfig};

fn main() -> isgan::Result<()> {
    let model = ModelBundle::new(ModelConfig::default(), 20, 0)?;
    match std::env::args().nth(1) {
        Some(path) => {
            let ck = Checkpoint::load(std::path::Path::new(&path))?;
            model.load_state(&|k| ck.get(k))?;
        }
        None => println!("no checkpoint given; rendering with an untrained generator"),
    }
    let records = synth_generate(5, 6, 2, (64, 32))?;
    let pairs: Vec<_> = (0..3).map(|i| (&records[4 * i].image, &records[4 * i + 2].image)).collect();
    let out = std::env::temp_dir().join("isgan_grids");
    for mode in GridMode::ALL {
        let grid = generation_grid(&model, &pairs, mode, &[0.0, 0.25, 0.5, 0.75, 1.0])?;
        let path = out.join(format!("{}.png", mode.name()));
        grid.save(&path)?;
        println!("{:<10} {} columns -> {}", mode.name(), grid.col_labels.len(), path.display());
    }
    Ok(())
}
