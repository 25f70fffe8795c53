//! Renders the procedural dataset, reports its factor statistics and writes it
//! as a manifest dataset that `isgan` can train on.
//!
//! `cargo run --example synth_dataset -- [dest_dir]`

use std::collections::BTreeMap;
use std::path::PathBuf;

use isgan::dataset::{factor_collisions, synth_splits, write_manifest_dataset, SynthSpec};

fn main() -> isgan::Result<()> {
    let dest = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("isgan_synth"), PathBuf::from);
    let spec = SynthSpec::new(7, 20, 16, (64, 32));
    let data = synth_splits(&spec, 10, 2)?;
    println!(
        "train {} ({} ids), query {}, gallery {} ({} ids)",
        data.train.len(),
        data.train_classes,
        data.query.len(),
        data.gallery.len(),
        data.test_classes
    );

    let mut per_camera = BTreeMap::new();
    let mut occluded = 0;
    for r in &data.train {
        *per_camera.entry(r.camera_id).or_insert(0) += 1;
        occluded += usize::from(r.factors.is_some_and(|f| f.occlusion));
    }
    println!("train images per camera: {per_camera:?}, occluded: {occluded}");
    println!("identities sharing a clothing triple: {:?}", factor_collisions(&data.train));

    let first = data.train[0].factors.expect("synthetic");
    println!("first record: id {} {:?}", data.train[0].identity, first);

    if dest.join(isgan::dataset::MANIFEST_FILE).exists() {
        println!("{} already holds a dataset; not overwriting", dest.display());
        return Ok(());
    }
    let manifest = write_manifest_dataset(&dest, &data)?;
    println!("wrote {} records to {}", manifest.records.len(), dest.display());
    Ok(())
}
