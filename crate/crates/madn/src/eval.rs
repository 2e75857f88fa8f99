//! Evaluation of MAR methods on the paired test split.
//!
//! Every method maps a corrupted test slice to a corrected one; "No MAR"
//! returns its input. Per sample the report holds σ_CT per ROI, PSNR and
//! SSIM against the ground truth for each modality the method outputs
//! (metal pixels excluded), and MR signal recovery inside the void (void
//! pixels off the implant): mean absolute error and nearest-intensity label
//! Dice. Every other method is compared with `madn` by paired t-tests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use madn_core::metrics::{mean_tissue_dice, masked_mae, population_std, psnr, sigma_ct, ssim, void_label_dice};
use madn_core::model::{ModelBundle, Mode};
use madn_core::training::correct;
use madn_core::{Modality, MultimodalSlice};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataset::{Dataset, TestSample};
use crate::error::{Error, IoContext, Result};
use crate::io::{read_json, write_json, write_slice};
use crate::stats::{paired_ttest, TTest};

pub const NO_MAR: &str = "no_mar";
pub const REFERENCE: &str = "madn";
pub const ROWS_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "report.json";
pub const CORRECTED_DIR: &str = "corrected";

pub const PSNR_CT: &str = "psnr_ct";
pub const SSIM_CT: &str = "ssim_ct";
pub const PSNR_MR: &str = "psnr_mr";
pub const SSIM_MR: &str = "ssim_mr";
pub const SIGMA_CT_MEAN: &str = "sigma_ct_mean";
pub const VOID_MAE: &str = "void_mae";
pub const VOID_DICE_MEAN: &str = "void_dice_mean";

pub fn sigma_ct_metric(roi: &str) -> String {
    format!("sigma_ct_{roi}")
}

pub fn void_dice_metric(class: usize) -> String {
    format!("void_dice_{class}")
}

pub enum Method {
    NoMar,
    Model(ModelBundle),
}

impl Method {
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
        }
        Ok(Method::Model(checkpoint::load(path)?.trainer.model))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::NoMar => NO_MAR,
            Method::Model(m) => m.mode().as_str(),
        }
    }

    /// Corrected slice holding the modalities this method outputs.
    pub fn apply(&self, x_a: &MultimodalSlice) -> Result<MultimodalSlice> {
        match self {
            Method::NoMar => Ok(x_a.clone()),
            Method::Model(m) => Ok(correct(m, &x_a.select(m.mode().modalities())?)?),
        }
    }
}

/// Column names of a report on `roi_names` with `n_tissues` classes.
pub fn metric_names(roi_names: &[String], n_tissues: usize) -> Vec<String> {
    let mut v: Vec<String> = roi_names.iter().map(|r| sigma_ct_metric(r)).collect();
    v.extend([SIGMA_CT_MEAN, PSNR_CT, SSIM_CT, PSNR_MR, SSIM_MR, VOID_MAE, VOID_DICE_MEAN].map(String::from));
    v.extend((0..n_tissues).map(void_dice_metric));
    v
}

/// Metrics of one corrected slice; absent modalities give `None`.
pub fn sample_metrics(out: &MultimodalSlice, t: &TestSample, tissue_intensity_mr: &[f64]) -> Result<BTreeMap<String, Option<f64>>> {
    let mut m = BTreeMap::new();
    let metal = Some(&t.metal_mask);
    let ct = out.ct();
    let mut sigmas = Vec::new();
    for (name, roi) in &t.roi_masks {
        let s = ct.map(|c| sigma_ct(c, roi)).transpose()?;
        sigmas.extend(s);
        m.insert(sigma_ct_metric(name), s);
    }
    m.insert(SIGMA_CT_MEAN.into(), ct.map(|_| sigmas.iter().sum::<f64>() / sigmas.len() as f64));
    let gt_ct = t.clean.ct().expect("test ground truth has CT");
    let gt_mr = t.clean.mr().expect("test ground truth has MR");
    m.insert(PSNR_CT.into(), ct.map(|c| psnr(c, gt_ct, metal)).transpose()?);
    m.insert(SSIM_CT.into(), ct.map(|c| ssim(c, gt_ct, metal)).transpose()?);
    let mr = out.mr();
    m.insert(PSNR_MR.into(), mr.map(|c| psnr(c, gt_mr, metal)).transpose()?);
    m.insert(SSIM_MR.into(), mr.map(|c| ssim(c, gt_mr, metal)).transpose()?);
    let void = t.void_mask.and_not(&t.metal_mask)?;
    m.insert(VOID_MAE.into(), mr.map(|c| masked_mae(c, gt_mr, &void)).transpose()?);
    let dice = mr.map(|c| void_label_dice(c, &t.labels, &void, tissue_intensity_mr)).transpose()?;
    m.insert(VOID_DICE_MEAN.into(), dice.as_ref().and_then(|d| mean_tissue_dice(d)));
    for k in 0..tissue_intensity_mr.len() {
        m.insert(void_dice_metric(k), dice.as_ref().and_then(|d| d[k]));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub method: String,
    pub sample: usize,
    pub seed: u64,
    /// Aligned with [`EvaluationReport::metrics`].
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Population standard deviation across samples.
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    /// `None` when either method lacks the metric, or for non-finite values.
    pub test: Option<TTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub methods: Vec<String>,
    pub metrics: Vec<String>,
    pub roi_names: Vec<String>,
    pub n_samples: usize,
    /// Method every other one is tested against, when present.
    pub reference: Option<String>,
    pub rows: Vec<SampleRow>,
    /// method → metric → summary.
    pub summary: BTreeMap<String, BTreeMap<String, MetricSummary>>,
    /// method → paired t-tests `method − reference` per metric.
    pub tests: BTreeMap<String, Vec<Comparison>>,
}

fn finite_summary(values: &[Option<f64>]) -> MetricSummary {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return MetricSummary {
            n: 0,
            mean: None,
            median: None,
            std: None,
        };
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let all_finite = v.iter().all(|x| x.is_finite());
    MetricSummary {
        n,
        mean: all_finite.then(|| v.iter().sum::<f64>() / n as f64),
        median: Some(median),
        std: all_finite.then(|| population_std(&v)),
    }
}

impl EvaluationReport {
    fn metric_index(&self, metric: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == metric)
    }

    /// Per-sample values of one metric for one method, in sample order.
    pub fn values(&self, method: &str, metric: &str) -> Vec<Option<f64>> {
        let Some(k) = self.metric_index(metric) else { return Vec::new() };
        self.rows.iter().filter(|r| r.method == method).map(|r| r.values[k]).collect()
    }

    pub fn summary_of(&self, method: &str, metric: &str) -> Option<MetricSummary> {
        self.summary.get(method)?.get(metric).copied()
    }

    pub fn test_of(&self, method: &str, metric: &str) -> Option<TTest> {
        self.tests.get(method)?.iter().find(|c| c.metric == metric)?.test
    }

    fn finish(methods: Vec<String>, metrics: Vec<String>, roi_names: Vec<String>, n_samples: usize, rows: Vec<SampleRow>) -> Self {
        let mut r = Self {
            reference: methods.iter().any(|m| m == REFERENCE).then(|| REFERENCE.to_string()),
            methods,
            metrics,
            roi_names,
            n_samples,
            rows,
            summary: BTreeMap::new(),
            tests: BTreeMap::new(),
        };
        for method in &r.methods {
            let s = r.metrics.iter().map(|k| (k.clone(), finite_summary(&r.values(method, k)))).collect();
            r.summary.insert(method.clone(), s);
        }
        if let Some(reference) = r.reference.clone() {
            for method in r.methods.iter().filter(|m| **m != reference) {
                let comps = r
                    .metrics
                    .iter()
                    .map(|k| {
                        let a = r.values(method, k);
                        let b = r.values(&reference, k);
                        let pairs: Option<(Vec<f64>, Vec<f64>)> =
                            a.iter().zip(&b).map(|(x, y)| Some(((*x)?, (*y)?))).collect::<Option<Vec<_>>>().map(|v| v.into_iter().unzip());
                        let test = pairs.and_then(|(x, y)| paired_ttest(&x, &y).ok());
                        Comparison { metric: k.clone(), test }
                    })
                    .collect();
                r.tests.insert(method.clone(), comps);
            }
        }
        r
    }
}

/// Runs every method on every test sample. With `out_dir` set, corrected
/// slices go to `<out_dir>/corrected/<method>/<sample>`.
pub fn evaluate(methods: &[Method], ds: &Dataset, out_dir: Option<&Path>) -> Result<EvaluationReport> {
    if methods.is_empty() {
        return Err(Error::Config("no methods to evaluate".into()));
    }
    let names: Vec<String> = methods.iter().map(|m| m.name().to_string()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::Config(format!("method {n} given twice")));
        }
    }
    let spec = ds.manifest.spec.spec();
    let metrics = metric_names(&ds.manifest.roi_names, spec.n_tissues);
    let samples = ds.test_samples()?;
    if samples.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let mut rows = Vec::with_capacity(methods.len() * samples.len());
    for (method, name) in methods.iter().zip(&names) {
        for t in &samples {
            let out = method.apply(&t.corrupted)?;
            if let Some(dir) = out_dir {
                write_slice(&dir.join(CORRECTED_DIR).join(name).join(format!("{:06}", t.index)), &out, t.seed)?;
            }
            let m = sample_metrics(&out, t, &spec.tissue_intensity_mr)?;
            rows.push(SampleRow {
                method: name.clone(),
                sample: t.index,
                seed: t.seed,
                values: metrics.iter().map(|k| m[k]).collect(),
            });
        }
    }
    Ok(EvaluationReport::finish(names, metrics, ds.manifest.roi_names.clone(), samples.len(), rows))
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) => format!("{x}"),
    }
}

/// Writes `report.csv` (one row per method and sample) and `report.json`.
pub fn write_report(report: &EvaluationReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).at(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(ROWS_FILE))?;
    let mut header = vec!["method".to_string(), "sample".into(), "seed".into()];
    header.extend(report.metrics.iter().cloned());
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![r.method.clone(), r.sample.to_string(), r.seed.to_string()];
        rec.extend(r.values.iter().map(|v| fmt_value(*v)));
        w.write_record(&rec)?;
    }
    w.flush().at(out_dir.join(ROWS_FILE))?;
    write_json(&out_dir.join(SUMMARY_FILE), report)
}

pub fn read_report(dir: &Path) -> Result<EvaluationReport> {
    read_json(&dir.join(SUMMARY_FILE))
}

/// Modalities a method name covers, for panel layout.
pub fn method_modalities(method: &str) -> &'static [Modality] {
    match Mode::parse(method) {
        Ok(m) => m.modalities(),
        Err(_) => &[Modality::Ct, Modality::Mr],
    }
}
