//! CMC and mAP on a hand-made query/gallery set, with and without removing
//! same-camera matches.
//!
//! `cargo run --example retrieval_eval`

use isgan::evaluator::{ranking, retrieval_metrics, Labelled};

fn main() -> isgan::Result<()> {
    let query = vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 0.0]];
    let (qids, qcams) = (vec![0, 1, 7], vec![1, 1, 2]);
    let gallery = vec![vec![0.1, 0.0], vec![0.0, 0.3], vec![5.0, 4.0], vec![1.0, 1.0], vec![4.0, 5.5]];
    let (gids, gcams) = (vec![0, 2, 1, 0, 1], vec![1, 2, 2, 2, 1]);

    for filter in [true, false] {
        let r = retrieval_metrics(Labelled::new(&query, &qids, &qcams)?, Labelled::new(&gallery, &gids, &gcams)?, filter)?;
        println!(
            "filter {filter}: cmc {:?} mAP {:.4} ({} scored, {} without any match)",
            r.cmc, r.map, r.n_scored, r.n_dropped
        );
        if filter {
            for (q, d) in r.distances.iter().enumerate() {
                println!("  query {q} ranking {:?}", ranking(d));
            }
        }
    }
    Ok(())
}
