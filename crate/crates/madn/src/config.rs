//! Single-file run configuration.
//!
//! Every field has a default, unknown keys are rejected, and any leaf can be
//! overridden from the command line with `--set section.key=value` (the value
//! is parsed as JSON, falling back to a plain string). `config.schema.json`
//! at the repository root documents the format.

use std::path::{Path, PathBuf};

use madn_core::lncc::LnccConfig;
use madn_core::losses::LossWeights;
use madn_core::model::{ArchConfig, Mode};
use madn_core::phantom::PhantomSpec;
use madn_core::training::StepConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::read_json;

/// Environment variable that replaces `paths.output_root`.
pub const OUTPUT_ROOT_ENV: &str = "MADN_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub image_size: usize,
    pub n_tissues: usize,
    pub tissue_intensity_ct: Vec<f64>,
    pub tissue_intensity_mr: Vec<f64>,
    pub implant_radius_range: [f64; 2],
    pub ct_severity: f64,
    pub mr_void_radius_factor: f64,
    /// `[CT, MR]`.
    pub noise_std: [f64; 2],
    pub seed: u64,
    pub metal_intensity_ct: f64,
    pub n_angles: usize,
    pub fbp_hann: bool,
    pub mr_pileup_ring: bool,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self::from(&PhantomSpec::default())
    }
}

impl From<&PhantomSpec> for PhantomConfig {
    fn from(s: &PhantomSpec) -> Self {
        Self {
            image_size: s.image_size,
            n_tissues: s.n_tissues,
            tissue_intensity_ct: s.tissue_intensity_ct.clone(),
            tissue_intensity_mr: s.tissue_intensity_mr.clone(),
            implant_radius_range: [s.implant_radius_range.0, s.implant_radius_range.1],
            ct_severity: s.ct_severity,
            mr_void_radius_factor: s.mr_void_radius_factor,
            noise_std: s.noise_std,
            seed: s.seed,
            metal_intensity_ct: s.metal_intensity_ct,
            n_angles: s.n_angles,
            fbp_hann: s.fbp_hann,
            mr_pileup_ring: s.mr_pileup_ring,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self) -> PhantomSpec {
        PhantomSpec {
            image_size: self.image_size,
            n_tissues: self.n_tissues,
            tissue_intensity_ct: self.tissue_intensity_ct.clone(),
            tissue_intensity_mr: self.tissue_intensity_mr.clone(),
            implant_radius_range: (self.implant_radius_range[0], self.implant_radius_range[1]),
            ct_severity: self.ct_severity,
            mr_void_radius_factor: self.mr_void_radius_factor,
            noise_std: self.noise_std,
            seed: self.seed,
            metal_intensity_ct: self.metal_intensity_ct,
            n_angles: self.n_angles,
            fbp_hann: self.fbp_hann,
            mr_pileup_ring: self.mr_pileup_ring,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_clean: usize,
    pub n_corrupted: usize,
    pub n_test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_clean: 200,
            n_corrupted: 200,
            n_test: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub lambda_adv_clean: f64,
    pub lambda_adv_corrupted: f64,
    pub lambda_rec: f64,
    pub lambda_cycle: f64,
    pub lambda_art: f64,
    pub lambda_sim: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            lambda_adv_clean: w.lambda_adv_clean,
            lambda_adv_corrupted: w.lambda_adv_corrupted,
            lambda_rec: w.lambda_rec,
            lambda_cycle: w.lambda_cycle,
            lambda_art: w.lambda_art,
            lambda_sim: w.lambda_sim,
        }
    }
}

impl From<WeightsConfig> for LossWeights {
    fn from(w: WeightsConfig) -> Self {
        Self {
            lambda_adv_clean: w.lambda_adv_clean,
            lambda_adv_corrupted: w.lambda_adv_corrupted,
            lambda_rec: w.lambda_rec,
            lambda_cycle: w.lambda_cycle,
            lambda_art: w.lambda_art,
            lambda_sim: w.lambda_sim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub base_channels: usize,
    pub artefact_channels: usize,
    pub disc_channels: usize,
    pub res_blocks: usize,
}

impl Default for ArchSection {
    fn default() -> Self {
        Self::from(ArchConfig::default())
    }
}

impl From<ArchConfig> for ArchSection {
    fn from(a: ArchConfig) -> Self {
        Self {
            base_channels: a.base_channels,
            artefact_channels: a.artefact_channels,
            disc_channels: a.disc_channels,
            res_blocks: a.res_blocks,
        }
    }
}

impl From<ArchSection> for ArchConfig {
    fn from(a: ArchSection) -> Self {
        Self {
            base_channels: a.base_channels,
            artefact_channels: a.artefact_channels,
            disc_channels: a.disc_channels,
            res_blocks: a.res_blocks,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LnccSection {
    pub sigma: f64,
    pub truncation_radius: usize,
    pub epsilon: f64,
}

impl Default for LnccSection {
    fn default() -> Self {
        let c = LnccConfig::default();
        Self {
            sigma: c.sigma,
            truncation_radius: c.truncation_radius,
            epsilon: c.epsilon,
        }
    }
}

impl From<LnccSection> for LnccConfig {
    fn from(c: LnccSection) -> Self {
        Self {
            sigma: c.sigma,
            truncation_radius: c.truncation_radius,
            epsilon: c.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// `adn_ct`, `adn_mr`, `multichannel_adn` or `madn`.
    pub mode: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    /// A checkpoint is written at every multiple of this and at the last step.
    pub checkpoint_every: u64,
    /// Validation similarity is logged at every multiple of this and at the last step.
    pub val_every: u64,
    /// Number of fixed corrupted training samples in the validation batch.
    pub val_samples: usize,
    pub weights: WeightsConfig,
    pub arch: ArchSection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Madn.as_str().into(),
            learning_rate: 1e-5,
            batch_size: 4,
            max_steps: 5000,
            seed: 0,
            checkpoint_every: 1000,
            val_every: 100,
            val_samples: 8,
            weights: WeightsConfig::default(),
            arch: ArchSection::default(),
        }
    }
}

impl TrainConfig {
    pub fn mode(&self) -> Result<Mode> {
        Ok(Mode::parse(&self.mode)?)
    }

    pub fn step_config(&self, lncc: &LnccSection) -> StepConfig {
        StepConfig {
            learning_rate: self.learning_rate as f32,
            weights: self.weights.into(),
            lncc: (*lncc).into(),
        }
    }

    pub fn validate(&self, lncc: &LnccSection) -> Result<()> {
        self.mode()?;
        ArchConfig::from(self.arch).validate()?;
        let step = self.step_config(lncc);
        step.validate()?;
        if step.learning_rate <= 0.0 {
            return Err(Error::Config(format!("train.learning_rate must be > 0, got {}", self.learning_rate)));
        }
        for (name, v) in [
            ("train.batch_size", self.batch_size as u64),
            ("train.max_steps", self.max_steps),
            ("train.checkpoint_every", self.checkpoint_every),
            ("train.val_every", self.val_every),
            ("train.val_samples", self.val_samples as u64),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root for everything a run writes; replaced by `MADN_OUTPUT_ROOT` when set.
    pub output_root: PathBuf,
    /// Dataset directory; defaults to `<output_root>/dataset`.
    pub dataset_dir: Option<PathBuf>,
    /// Training output directory; defaults to `<output_root>/<mode>`.
    pub run_dir: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            output_root: PathBuf::from("runs"),
            dataset_dir: None,
            run_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Side-by-side method panels per test sample.
    pub panels: bool,
    /// Per-ROI σ_CT bar charts.
    pub sigma_bars: bool,
    /// Upper bound on the number of samples that get a panel.
    pub max_panels: usize,
    /// Pixel magnification of panel images.
    pub scale: u32,
    /// Significance level for bar-chart stars.
    pub alpha: f64,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            panels: true,
            sigma_bars: true,
            max_panels: 4,
            scale: 3,
            alpha: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phantom: PhantomConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub lncc: LnccSection,
    pub paths: PathsConfig,
    pub plot: PlotConfig,
}

impl RunConfig {
    /// Defaults, then the optional file, then `--set` overrides, then the
    /// output-root environment variable.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg: Self = match path {
            Some(p) => read_json(p)?,
            None => Self::default(),
        };
        cfg = cfg.with_overrides(overrides)?;
        if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
            cfg.paths.output_root = PathBuf::from(root);
        }
        Ok(cfg)
    }

    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut tree = serde_json::to_value(&self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.spec().validate()?;
        self.train.validate(&self.lncc)?;
        if self.dataset.n_clean == 0 || self.dataset.n_corrupted == 0 || self.dataset.n_test == 0 {
            return Err(Error::Config("dataset counts must be >= 1".into()));
        }
        if !(self.plot.alpha > 0.0 && self.plot.alpha < 1.0) {
            return Err(Error::Config(format!("plot.alpha must lie in (0, 1), got {}", self.plot.alpha)));
        }
        if self.plot.scale == 0 {
            return Err(Error::Config("plot.scale must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths.dataset_dir.clone().unwrap_or_else(|| self.paths.output_root.join("dataset"))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.paths.run_dir.clone().unwrap_or_else(|| self.paths.output_root.join(&self.train.mode))
    }
}

fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {} is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        let slot = obj.get_mut(*part).expect("checked above");
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::Config("empty override key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert_eq!(c.phantom.spec(), PhantomSpec::default());
        assert_eq!(ArchConfig::from(c.train.arch), ArchConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"modee": "madn"}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"extra": 1}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"train": {"max_steps": 3}}"#).unwrap();
        assert_eq!(partial.train.max_steps, 3);
        assert_eq!(partial.train.batch_size, 4);
    }

    #[test]
    fn overrides_apply_typed_values() {
        let c = RunConfig::default()
            .with_overrides(&[
                "train.mode=adn_mr".into(),
                "train.max_steps=7".into(),
                "train.weights.lambda_sim=0.5".into(),
                "phantom.noise_std=[0.0,0.1]".into(),
                "paths.run_dir=out/x".into(),
            ])
            .unwrap();
        assert_eq!(c.train.mode, "adn_mr");
        assert_eq!(c.train.max_steps, 7);
        assert_eq!(c.train.weights.lambda_sim, 0.5);
        assert_eq!(c.phantom.noise_std, [0.0, 0.1]);
        assert_eq!(c.run_dir(), PathBuf::from("out/x"));
        for bad in ["train.nope=1", "train", "train.max_steps=-1", "train.mode.x=1"] {
            assert!(RunConfig::default().with_overrides(&[bad.into()]).is_err(), "{bad}");
        }
    }

    #[test]
    fn invalid_mode_rejected() {
        let c = RunConfig::default().with_overrides(&["train.mode=adn_pet".into()]).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn schema_documents_every_key() {
        let schema: Value =
            serde_json::from_str(include_str!("../../../config.schema.json")).expect("schema parses");
        let defaults = serde_json::to_value(RunConfig::default()).unwrap();
        fn walk(schema: &Value, value: &Value, path: &str) {
            let props = schema["properties"].as_object().unwrap_or_else(|| panic!("{path}: no properties"));
            assert_eq!(schema["additionalProperties"], Value::Bool(false), "{path}");
            for (k, v) in value.as_object().unwrap() {
                let s = props.get(k).unwrap_or_else(|| panic!("{path}.{k} missing from schema"));
                assert!(s.get("description").is_some(), "{path}.{k} lacks a description");
                if v.is_object() {
                    walk(s, v, &format!("{path}.{k}"));
                } else {
                    assert_eq!(s.get("default"), Some(v), "{path}.{k} default");
                }
            }
            assert_eq!(props.len(), value.as_object().unwrap().len(), "{path}: stale schema keys");
        }
        walk(&schema, &defaults, "");
    }
}
