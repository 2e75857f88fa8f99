//! The `madn` binary end to end on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use madn::eval::{read_report, CORRECTED_DIR, NO_MAR, PSNR_CT};
use madn::io::read_slice;
use madn::plot::BarSidecar;
use madn_core::metrics::psnr;
use madn_core::Modality;

const TINY: &str = r#"{
  "phantom": { "image_size": 32, "implant_radius_range": [2.0, 3.0] },
  "dataset": { "n_clean": 6, "n_corrupted": 6, "n_test": 4 },
  "train": {
    "learning_rate": 0.001, "batch_size": 2, "max_steps": 4,
    "checkpoint_every": 2, "val_every": 2, "val_samples": 2,
    "arch": { "base_channels": 4, "artefact_channels": 2, "disc_channels": 4, "res_blocks": 1 }
  },
  "plot": { "max_panels": 2 }
}"#;

fn madn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_madn"))
        .current_dir(dir)
        .env_remove("MADN_OUTPUT_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = madn(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(madn(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(madn(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(madn(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(madn(dir.path(), &["train", "--no-such-flag"]).status.code(), Some(1));
    let bad_mode = madn(dir.path(), &["--set", "train.mode=adn_pet", "show-config"]);
    assert_eq!(bad_mode.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_mode.stderr).contains("adn_pet"));
    assert_eq!(madn(dir.path(), &["--set", "train.nope=1", "show-config"]).status.code(), Some(1));
    assert_eq!(madn(dir.path(), &["--config", "missing.json", "show-config"]).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = madn(dir.path(), &["eval", "--data", "nowhere", "--checkpoint", "none.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = madn(dir.path(), &["correct", "--checkpoint", "none.ckpt", "--input", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn show_config_applies_file_overrides_and_env() {
    let (dir, cfg) = workspace();
    let cfg = cfg.to_str().unwrap();
    let shown: serde_json::Value =
        serde_json::from_str(&ok(dir.path(), &["--config", cfg, "--set", "train.max_steps=9", "show-config"])).unwrap();
    assert_eq!(shown["train"]["max_steps"], 9);
    assert_eq!(shown["phantom"]["image_size"], 32);
    assert_eq!(shown["phantom"]["n_tissues"], 4);
    let out = Command::new(env!("CARGO_BIN_EXE_madn"))
        .env("MADN_OUTPUT_ROOT", "/elsewhere")
        .args(["show-config"])
        .output()
        .unwrap();
    let shown: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(shown["paths"]["output_root"], "/elsewhere");
}

#[test]
fn gen_train_correct_eval_plot() {
    let (dir, cfg) = workspace();
    let d = dir.path();
    let cfg = cfg.to_str().unwrap();
    ok(d, &["--config", cfg, "gen-data", "--out", "data"]);
    let ckpt = ok(d, &["--config", cfg, "train", "--data", "data", "--out", "run"]);
    let ckpt = ckpt.trim();
    assert!(ckpt.ends_with("checkpoint_000004.ckpt"), "{ckpt}");
    assert!(d.join("run/checkpoint_000002.ckpt").is_file());
    assert!(d.join("run/train_log.csv").is_file() && d.join("run/summary.json").is_file());

    let corrected = ok(d, &["correct", "--checkpoint", ckpt, "--input", "data/test/000001/corrupted", "--out", "one"]);
    assert!(corrected.trim().ends_with("one.raw"));

    ok(d, &["--config", cfg, "eval", "--checkpoint", ckpt, "--data", "data", "--out", "eval"]);
    let report = read_report(&d.join("eval")).unwrap();
    assert_eq!(report.methods, [NO_MAR, "madn"]);
    assert_eq!(report.n_samples, 4);

    // the standalone correction is the one the report scored
    let (single, _) = read_slice(&d.join("one")).unwrap();
    let (batch, _) = read_slice(&d.join("eval").join(CORRECTED_DIR).join("madn").join("000001")).unwrap();
    assert_eq!(single, batch);
    let (gt, _) = read_slice(&d.join("data/test/000001/clean")).unwrap();
    let metal = madn::io::read_mask(&d.join("data/test/000001/metal_mask")).unwrap();
    let p = psnr(single.channel(Modality::Ct).unwrap(), gt.channel(Modality::Ct).unwrap(), Some(&metal)).unwrap();
    let row = report.rows.iter().find(|r| r.method == "madn" && r.sample == 1).unwrap();
    let idx = report.metrics.iter().position(|m| m == PSNR_CT).unwrap();
    assert!((row.values[idx].unwrap() - p).abs() < 1e-6);

    let figures = ok(d, &["--config", cfg, "plot", "--report", "eval", "--data", "data"]);
    let figures: Vec<&str> = figures.lines().collect();
    assert!(figures.iter().any(|f| f.ends_with("panel_000000.png")));
    assert!(!figures.iter().any(|f| f.ends_with("panel_000002.png")), "max_panels respected");
    let bars: BarSidecar = serde_json::from_str(
        &std::fs::read_to_string(d.join("eval/figures/sigma_ct_mean.json")).unwrap(),
    )
    .unwrap();
    for b in &bars.bars {
        let p = report.test_of(&b.method, "sigma_ct_mean").and_then(|t| t.p);
        assert_eq!(b.p, p);
        assert_eq!(b.star, p.is_some_and(|p| p < bars.alpha));
    }
    for f in figures {
        let img = image::open(d.join(f)).unwrap();
        assert!(img.width() > 0 && img.height() > 0);
    }
}
