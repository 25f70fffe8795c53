//! Linear probes on frozen features: which synthetic factors each
//! representation of an (untrained or trained) model makes linearly readable.
//!
//! `cargo run --release --example linear_probe -- [checkpoint]`

use isgan::checkpoint::Checkpoint;
use isgan::dataset::synth_generate;
use isgan::evaluator::{probe_attribute, ProbeAttribute, ProbeSpec};
use isgan::model::{ModelBundle, ModelConfig};

fn main() -> isgan::Result<()> {
    let model = ModelBundle::new(ModelConfig::default(), 20, 0)?;
    if let Some(path) = std::env::args().nth(1) {
        let ck = Checkpoint::load(std::path::Path::new(&path))?;
        model.load_state(&|k| ck.get(k))?;
        println!("loaded {path}");
    }
    let records = synth_generate(11, 20, 12, (64, 32))?;
    for attr in ProbeAttribute::ALL {
        let r = probe_attribute(&model, &records, attr, &ProbeSpec::default(), 0)?;
        println!(
            "{:<12} phi_R {:.3}  phi_U {:.3}  (validation prior {:.3}, {} samples)",
            r.attribute, r.accuracy_r, r.accuracy_u, r.val_prior, r.n_val
        );
    }
    Ok(())
}
