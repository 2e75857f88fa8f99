//! On-disk synthetic datasets: two unpaired training splits and a paired test split.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/train_clean/000000.{raw,json}
//! <dir>/train_corrupted/000000.{raw,json}
//! <dir>/test/000000/{clean,corrupted,metal_mask,void_mask,labels,roi_<name>}.{raw,json}
//! ```
//!
//! Sample `i` of the clean, corrupted and test splits uses anatomy seed
//! `3i`, `3i + 1` and `3i + 2`, so the three splits never share an anatomy.

use std::fs;
use std::path::{Path, PathBuf};

use madn_core::metrics::psnr;
use madn_core::phantom::{make_clean_sample, make_corrupted_sample, PhantomSample};
use madn_core::{Grid, Mask, Modality, MultimodalSlice};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, PhantomConfig};
use crate::error::{Error, IoContext, Result};
use crate::io::{read_json, read_labels, read_mask, read_slice, write_json, write_labels, write_mask, write_slice};

pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_CLEAN: &str = "train_clean";
pub const TRAIN_CORRUPTED: &str = "train_corrupted";
pub const TEST: &str = "test";
const FORMAT_VERSION: u32 = 1;

pub fn clean_seed(i: usize) -> u64 {
    3 * i as u64
}

pub fn corrupted_seed(i: usize) -> u64 {
    3 * i as u64 + 1
}

pub fn test_seed(i: usize) -> u64 {
    3 * i as u64 + 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    /// Path relative to the dataset root, without extension (a directory for test samples).
    pub path: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: PhantomConfig,
    pub counts: DatasetConfig,
    pub train_clean: Vec<SplitEntry>,
    pub train_corrupted: Vec<SplitEntry>,
    pub test: Vec<SplitEntry>,
    pub roi_names: Vec<String>,
    /// Mean over the test split of PSNR(corrupted CT, clean CT), metal excluded.
    pub test_mean_psnr_ct: f64,
}

/// Paired held-out sample with everything needed for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSample {
    pub index: usize,
    pub seed: u64,
    pub clean: MultimodalSlice,
    pub corrupted: MultimodalSlice,
    pub metal_mask: Mask,
    pub void_mask: Mask,
    pub labels: Grid<u8>,
    pub roi_masks: Vec<(String, Mask)>,
}

fn write_test_sample(dir: &Path, s: &PhantomSample) -> Result<()> {
    let corrupted = s.corrupted.as_ref().expect("test samples are corrupted draws");
    write_slice(&dir.join("clean"), &s.clean, s.sample_seed)?;
    write_slice(&dir.join("corrupted"), corrupted, s.sample_seed)?;
    write_mask(&dir.join("metal_mask"), &s.metal_mask, s.sample_seed)?;
    write_mask(&dir.join("void_mask"), &s.void_mask, s.sample_seed)?;
    write_labels(&dir.join("labels"), &s.labels, s.sample_seed)?;
    for (name, m) in &s.roi_masks {
        write_mask(&dir.join(format!("roi_{name}")), m, s.sample_seed)?;
    }
    Ok(())
}

/// Generates and writes all three splits plus the manifest.
pub fn build_dataset(phantom: &PhantomConfig, counts: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    let spec = phantom.spec();
    spec.validate()?;
    if counts.n_clean == 0 || counts.n_corrupted == 0 || counts.n_test == 0 {
        return Err(Error::Config("dataset counts must be >= 1".into()));
    }
    fs::create_dir_all(out_dir).at(out_dir)?;
    let name = |i: usize| format!("{i:06}");

    let mut train_clean = Vec::with_capacity(counts.n_clean);
    for i in 0..counts.n_clean {
        let seed = clean_seed(i);
        let s = make_clean_sample(&spec, seed)?;
        let path = format!("{TRAIN_CLEAN}/{}", name(i));
        write_slice(&out_dir.join(&path), &s.clean, seed)?;
        train_clean.push(SplitEntry { path, seed });
    }

    let mut train_corrupted = Vec::with_capacity(counts.n_corrupted);
    for i in 0..counts.n_corrupted {
        let seed = corrupted_seed(i);
        let s = make_corrupted_sample(&spec, seed)?;
        let path = format!("{TRAIN_CORRUPTED}/{}", name(i));
        write_slice(&out_dir.join(&path), s.corrupted.as_ref().expect("corrupted draw"), seed)?;
        train_corrupted.push(SplitEntry { path, seed });
    }

    let mut test = Vec::with_capacity(counts.n_test);
    let mut psnr_sum = 0.0;
    let mut roi_names = Vec::new();
    for i in 0..counts.n_test {
        let seed = test_seed(i);
        let s = make_corrupted_sample(&spec, seed)?;
        let path = format!("{TEST}/{}", name(i));
        write_test_sample(&out_dir.join(&path), &s)?;
        let corrupted = s.corrupted.as_ref().expect("corrupted draw");
        psnr_sum += psnr(corrupted.ct().expect("CT"), s.clean.ct().expect("CT"), Some(&s.metal_mask))?;
        roi_names = s.roi_masks.iter().map(|(n, _)| n.clone()).collect();
        test.push(SplitEntry { path, seed });
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: phantom.clone(),
        counts: counts.clone(),
        train_clean,
        train_corrupted,
        test,
        roi_names,
        test_mean_psnr_ct: psnr_sum / counts.n_test as f64,
    };
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// A dataset directory opened through its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        if !path.is_file() {
            return Err(Error::Config(format!("no dataset at {} (missing {MANIFEST})", root.display())));
        }
        let manifest: Manifest = read_json(&path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: dataset format {} (expected {FORMAT_VERSION})",
                path.display(),
                manifest.format_version
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    fn load_split(&self, entries: &[SplitEntry], modalities: &[Modality]) -> Result<Vec<MultimodalSlice>> {
        entries
            .iter()
            .map(|e| Ok(read_slice(&self.root.join(&e.path))?.0.select(modalities)?))
            .collect()
    }

    /// Clean training slices restricted to `modalities`.
    pub fn train_clean(&self, modalities: &[Modality]) -> Result<Vec<MultimodalSlice>> {
        self.load_split(&self.manifest.train_clean, modalities)
    }

    pub fn train_corrupted(&self, modalities: &[Modality]) -> Result<Vec<MultimodalSlice>> {
        self.load_split(&self.manifest.train_corrupted, modalities)
    }

    pub fn test_sample(&self, index: usize) -> Result<TestSample> {
        let e = self
            .manifest
            .test
            .get(index)
            .ok_or_else(|| Error::Config(format!("test sample {index} out of range")))?;
        let dir = self.root.join(&e.path);
        let roi_masks = self
            .manifest
            .roi_names
            .iter()
            .map(|n| Ok((n.clone(), read_mask(&dir.join(format!("roi_{n}")))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TestSample {
            index,
            seed: e.seed,
            clean: read_slice(&dir.join("clean"))?.0,
            corrupted: read_slice(&dir.join("corrupted"))?.0,
            metal_mask: read_mask(&dir.join("metal_mask"))?,
            void_mask: read_mask(&dir.join("void_mask"))?,
            labels: read_labels(&dir.join("labels"))?,
            roi_masks,
        })
    }

    pub fn test_samples(&self) -> Result<Vec<TestSample>> {
        (0..self.manifest.test.len()).map(|i| self.test_sample(i)).collect()
    }
}
