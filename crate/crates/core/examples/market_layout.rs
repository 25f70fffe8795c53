//! Loads a dataset stored under the Market-1501 directory convention. Builds a
//! tiny fake one in a temporary directory when no root is given.
//!
//! `cargo run --example market_layout -- [root]`

use std::path::PathBuf;

use isgan::dataset::{load_market_layout, parse_market_filename, SplitSpec};

fn main() -> isgan::Result<()> {
    let root = match std::env::args().nth(1) {
        Some(r) => PathBuf::from(r),
        None => fake_market(),
    };
    for name in ["0002_c1s1_000451_03.jpg", "-1_c3s2_000001_00.jpg", "readme.txt"] {
        println!("{name:<26} -> {:?}", parse_market_filename(name));
    }
    let data = load_market_layout(&root, &SplitSpec::default())?;
    println!(
        "train {} images / {} ids, query {}, gallery {} ({} test ids)",
        data.train.len(),
        data.train_classes,
        data.query.len(),
        data.gallery.len(),
        data.test_classes
    );
    for r in data.query.iter().take(3) {
        println!("  query {} -> id {} cam {}", r.source_id, r.identity, r.camera_id);
    }
    Ok(())
}

fn fake_market() -> PathBuf {
    let root = std::env::temp_dir().join("isgan_fake_market");
    let img = image::RgbImage::from_pixel(32, 64, image::Rgb([90, 120, 150]));
    let files = [
        ("bounding_box_train", ["0002_c1s1_000451_03.jpg", "0002_c2s1_000452_01.jpg", "0007_c1s1_000100_01.jpg", "0007_c3s1_000200_02.jpg"]),
        ("query", ["0011_c1s1_000001_00.jpg", "0012_c2s1_000002_00.jpg", "0011_c4s1_000010_00.jpg", "0012_c1s1_000020_00.jpg"]),
        ("bounding_box_test", ["0011_c2s1_000003_01.jpg", "0012_c3s1_000004_01.jpg", "-1_c1s1_000005_01.jpg", "0000_c1s1_000006_01.jpg"]),
    ];
    for (dir, names) in files {
        let d = root.join(dir);
        std::fs::create_dir_all(&d).expect("create dir");
        for n in names {
            img.save(d.join(n)).expect("write jpg");
        }
    }
    root
}
