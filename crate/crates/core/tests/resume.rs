use isgan::checkpoint::Checkpoint;
use isgan::config::RunConfig;
use isgan::trainer::{latest_checkpoint, Position, Trainer};

fn config(name: &str, out: &std::path::Path) -> RunConfig {
    RunConfig::from_value(serde_json::json!({
        "name": name,
        "out_dir": out,
        "dataset": {"synth": {"n_ids": 6, "imgs_per_id": 6, "n_test_ids": 4}},
        "train": {"epochs": [2, 2, 2], "batches_per_epoch": 1, "eval_each_epoch": false}
    }))
    .unwrap()
}

fn trainer(cfg: &RunConfig) -> Trainer {
    let data = cfg.dataset.load(cfg.seed).unwrap();
    let model = isgan::cli::build_model(cfg, &data).unwrap();
    Trainer::new(model, data, isgan::cli::trainer_options(cfg).unwrap()).unwrap()
}

fn log_body(cfg: &RunConfig) -> String {
    std::fs::read_to_string(cfg.run_dir().join("log.csv")).unwrap()
}

#[test]
fn interrupted_run_resumes_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();

    let straight = config("straight", tmp.path());
    let mut a = trainer(&straight);
    let reports = a.run().unwrap();
    assert!(reports.iter().all(|r| r.changed.is_empty()));

    for stop in [Position { stage: 1, epoch: 1 }, Position { stage: 2, epoch: 1 }, Position { stage: 3, epoch: 1 }] {
        let split = config(&format!("split_{}_{}", stop.stage, stop.epoch), tmp.path());
        let mut first = trainer(&split);
        first.run_until(Some(stop)).unwrap();
        assert_eq!(first.position(), stop);
        drop(first);

        let ck = latest_checkpoint(&split.run_dir()).unwrap();
        let mut second = trainer(&split);
        second.load_checkpoint(Checkpoint::load(&ck).unwrap()).unwrap();
        second.run().unwrap();
        assert!(second.is_finished());

        assert_eq!(second.model.digests().unwrap(), a.model.digests().unwrap(), "stop {stop:?}");
        assert_eq!(log_body(&split), log_body(&straight), "stop {stop:?}");
    }
}

#[test]
fn same_seed_same_weights_different_seed_differs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("a", tmp.path());
    cfg.train.epochs = Some([1, 1, 1]);
    cfg.train.warmup_epochs = Some(0);
    let mut a = trainer(&cfg);
    a.run().unwrap();
    cfg.name = "b".into();
    let mut b = trainer(&cfg);
    b.run().unwrap();
    assert_eq!(a.model.digests().unwrap(), b.model.digests().unwrap());
    cfg.name = "c".into();
    cfg.seed = 1;
    let mut c = trainer(&cfg);
    c.run().unwrap();
    assert_ne!(a.model.digests().unwrap(), c.model.digests().unwrap());
}
