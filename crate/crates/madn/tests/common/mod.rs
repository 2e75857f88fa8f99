//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use madn::config::RunConfig;
use madn::train::LogRow;

/// Relative path → bytes of every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// A small 32×32 configuration that trains in well under a second per step.
pub fn tiny_config(mode: &str, max_steps: u64) -> RunConfig {
    RunConfig::default()
        .with_overrides(&[
            "phantom.image_size=32".into(),
            "phantom.implant_radius_range=[2.0,3.0]".into(),
            "dataset.n_clean=6".into(),
            "dataset.n_corrupted=6".into(),
            "dataset.n_test=3".into(),
            format!("train.mode={mode}"),
            "train.learning_rate=0.001".into(),
            "train.batch_size=2".into(),
            format!("train.max_steps={max_steps}"),
            "train.checkpoint_every=3".into(),
            "train.val_every=2".into(),
            "train.val_samples=2".into(),
            "train.arch.base_channels=4".into(),
            "train.arch.artefact_channels=2".into(),
            "train.arch.disc_channels=4".into(),
            "train.arch.res_blocks=1".into(),
        ])
        .unwrap()
}

/// Log rows with the wall clock blanked out.
pub fn trace(rows: &[LogRow]) -> Vec<LogRow> {
    rows.iter()
        .cloned()
        .map(|mut r| {
            r.wall_seconds = 0.0;
            r
        })
        .collect()
}
