//! Bit-identical datasets, reproducible training traces and exact resume.

mod common;

use common::{tiny_config, trace, tree};
use madn::checkpoint;
use madn::dataset::build_dataset;
use madn::train::{read_log, train, LOG_FILE};

#[test]
fn same_seeds_same_dataset_bytes() {
    let cfg = tiny_config("madn", 1);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = build_dataset(&cfg.phantom, &cfg.dataset, a.path()).unwrap();
    let mb = build_dataset(&cfg.phantom, &cfg.dataset, b.path()).unwrap();
    assert_eq!(ma, mb);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() > 20);
    assert_eq!(ta, tb);

    let mut other = cfg.phantom.clone();
    other.seed += 1;
    let c = tempfile::tempdir().unwrap();
    build_dataset(&other, &cfg.dataset, c.path()).unwrap();
    assert_ne!(tree(c.path()), ta);
}

#[test]
fn same_seeds_same_loss_trace() {
    let data = tempfile::tempdir().unwrap();
    for mode in ["madn", "multichannel_adn", "adn_mr"] {
        let cfg = tiny_config(mode, 5);
        build_dataset(&cfg.phantom, &cfg.dataset, data.path()).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = train(&cfg, data.path(), a.path(), None, |_| {}).unwrap();
        let rb = train(&cfg, data.path(), b.path(), None, |_| {}).unwrap();
        assert_eq!(ra.rows.len(), 5);
        assert_eq!(trace(&ra.rows), trace(&rb.rows), "{mode}");
        assert_eq!(trace(&read_log(&a.path().join(LOG_FILE)).unwrap()), trace(&ra.rows));
        assert_eq!(
            std::fs::read(&ra.final_checkpoint).unwrap(),
            std::fs::read(b.path().join(ra.final_checkpoint.file_name().unwrap())).unwrap()
        );
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = tempfile::tempdir().unwrap();
    let cfg = tiny_config("madn", 8);
    build_dataset(&cfg.phantom, &cfg.dataset, data.path()).unwrap();

    let full_dir = tempfile::tempdir().unwrap();
    let full = train(&cfg, data.path(), full_dir.path(), None, |_| {}).unwrap();

    // stop at 5, then resume from the earlier checkpoint at 3
    let split_dir = tempfile::tempdir().unwrap();
    let short = tiny_config("madn", 5);
    train(&short, data.path(), split_dir.path(), None, |_| {}).unwrap();
    let from = split_dir.path().join(checkpoint::file_name(3));
    let resumed = train(&cfg, data.path(), split_dir.path(), Some(&from), |_| {}).unwrap();

    assert_eq!(trace(&resumed.rows), trace(&full.rows));
    assert_eq!(trace(&read_log(&split_dir.path().join(LOG_FILE)).unwrap()), trace(&full.rows));
    let a = checkpoint::load(&full.final_checkpoint).unwrap();
    let b = checkpoint::load(&resumed.final_checkpoint).unwrap();
    assert_eq!(a.trainer, b.trainer);
    assert_eq!(std::fs::read(&full.final_checkpoint).unwrap(), std::fs::read(&resumed.final_checkpoint).unwrap());
    assert_eq!(resumed.summary.val_sim_initial, full.summary.val_sim_initial);
    let steps: Vec<u64> = checkpoint::list(split_dir.path()).unwrap().into_iter().map(|(s, _)| s).collect();
    assert_eq!(steps, [3, 6, 8]);
}

#[test]
fn resume_rejects_a_different_architecture() {
    let data = tempfile::tempdir().unwrap();
    let cfg = tiny_config("madn", 3);
    build_dataset(&cfg.phantom, &cfg.dataset, data.path()).unwrap();
    let run = tempfile::tempdir().unwrap();
    let out = train(&cfg, data.path(), run.path(), None, |_| {}).unwrap();
    let wider = cfg.clone().with_overrides(&["train.arch.base_channels=6".into(), "train.max_steps=4".into()]).unwrap();
    assert!(train(&wider, data.path(), run.path(), Some(&out.final_checkpoint), |_| {}).is_err());
    let other_mode = tiny_config("multichannel_adn", 4);
    assert!(train(&other_mode, data.path(), run.path(), Some(&out.final_checkpoint), |_| {}).is_err());
}
