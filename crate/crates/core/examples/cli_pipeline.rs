//! The command-line workflow driven in-process: synth, train, eval, probe,
//! generate and export-embeddings on a shortened schedule.
//!
//! `cargo run --release --example cli_pipeline -- [out_dir]`

use isgan::cli::main_with_args;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("isgan_cli_demo").display().to_string());
    let _ = std::fs::remove_dir_all(&out);
    let common = [
        "--out",
        &out,
        "--set",
        "name=demo",
        "--set",
        "train.epochs=[2,2,2]",
        "--set",
        "train.batches_per_epoch=3",
    ];
    let steps: [&[&str]; 6] = [
        &["synth"],
        &["train"],
        &["eval"],
        &["probe", "--attribute", "torso_color"],
        &["generate", "--mode", "interp_r", "--pairs", "0:2,1:3"],
        &["export-embeddings", "--kind", "unrelated"],
    ];
    for step in steps {
        let mut argv = vec!["isgan"];
        argv.extend(common);
        argv.extend(step);
        println!("$ {}", argv.join(" "));
        let code = main_with_args(argv);
        if code != 0 {
            eprintln!("exit code {code}");
            std::process::exit(code);
        }
    }
}
