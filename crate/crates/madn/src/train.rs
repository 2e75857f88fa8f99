//! Training runs: batching from a dataset directory, CSV logging, checkpoints and resume.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use madn_core::model::{slices_to_tensor, ModelBundle, Mode};
use madn_core::nn::Tensor;
use madn_core::training::{validation_sim, BatchSchedule, StepMetrics, Trainer};
use madn_core::MultimodalSlice;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{Error, IoContext, Result};
use crate::io::write_json;

pub const LOG_FILE: &str = "train_log.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// One row of the training log. `sim` is empty for modes without the
/// similarity term and `val_sim` on rows without a validation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub d_clean: f64,
    pub d_corrupted: f64,
    pub adv_clean: f64,
    pub adv_corrupted: f64,
    pub rec: f64,
    pub cycle: f64,
    pub art: f64,
    pub sim: Option<f64>,
    pub total: f64,
    pub val_sim: Option<f64>,
    pub wall_seconds: f64,
}

impl LogRow {
    fn new(m: &StepMetrics, val_sim: Option<f64>, wall_seconds: f64) -> Self {
        let t = m.generator.terms;
        Self {
            step: m.step,
            d_clean: m.d_clean,
            d_corrupted: m.d_corrupted,
            adv_clean: t.adv_clean,
            adv_corrupted: t.adv_corrupted,
            rec: t.rec,
            cycle: t.cycle,
            art: t.art,
            sim: t.sim,
            total: m.generator.total,
            val_sim,
            wall_seconds,
        }
    }

    /// Every field except the wall-clock time.
    pub fn losses(&self) -> [Option<f64>; 10] {
        [
            Some(self.d_clean),
            Some(self.d_corrupted),
            Some(self.adv_clean),
            Some(self.adv_corrupted),
            Some(self.rec),
            Some(self.cycle),
            Some(self.art),
            self.sim,
            Some(self.total),
            self.val_sim,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub steps: u64,
    pub final_checkpoint: PathBuf,
    pub val_sim_initial: Option<f64>,
    pub val_sim_final: Option<f64>,
    pub final_total: Option<f64>,
    /// Mean discriminator logits of the last step on real clean images and on `x̂`.
    pub d_real_clean_logit: Option<f64>,
    pub d_fake_clean_logit: Option<f64>,
    pub wall_seconds: f64,
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<LogRow>, _>>()?)
}

fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().at(path)
}

/// Training data held in memory, restricted to the mode's channels.
pub struct TrainData {
    pub clean: Vec<MultimodalSlice>,
    pub corrupted: Vec<MultimodalSlice>,
    mode: Mode,
}

impl TrainData {
    pub fn load(ds: &Dataset, mode: Mode) -> Result<Self> {
        Ok(Self {
            clean: ds.train_clean(mode.modalities())?,
            corrupted: ds.train_corrupted(mode.modalities())?,
            mode,
        })
    }

    fn tensor(&self, set: &[MultimodalSlice], idx: &[usize]) -> Result<Tensor> {
        let refs: Vec<&MultimodalSlice> = idx.iter().map(|i| &set[*i]).collect();
        Ok(slices_to_tensor(&refs, self.mode.modalities())?)
    }

    /// `(x_a, y)` batch tensors for zero-based `step`.
    pub fn batch(&self, schedule: &BatchSchedule, step: u64) -> Result<(Tensor, Tensor)> {
        let (ci, yi) = schedule.batch(step);
        Ok((self.tensor(&self.corrupted, &ci)?, self.tensor(&self.clean, &yi)?))
    }

    /// The first `n` corrupted training samples.
    pub fn validation_batch(&self, n: usize) -> Result<Tensor> {
        let idx: Vec<usize> = (0..n.min(self.corrupted.len())).collect();
        self.tensor(&self.corrupted, &idx)
    }
}

fn val_sim(cfg: &RunConfig, m: &ModelBundle, val: &Tensor) -> Result<Option<f64>> {
    if m.n_channels() < 2 {
        return Ok(None);
    }
    Ok(Some(validation_sim(m, val, &cfg.lncc.into())?))
}

pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub summary: Summary,
    pub rows: Vec<LogRow>,
}

/// Runs (or resumes) training up to `cfg.train.max_steps`, writing the
/// config, the log, checkpoints and a summary into `run_dir`. `on_row` sees
/// every log row as it is produced.
pub fn train(
    cfg: &RunConfig,
    dataset_dir: &Path,
    run_dir: &Path,
    resume: Option<&Path>,
    mut on_row: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mode = cfg.train.mode()?;
    let ds = Dataset::open(dataset_dir)?;
    let data = TrainData::load(&ds, mode)?;
    let schedule = BatchSchedule::new(data.clean.len(), data.corrupted.len(), cfg.train.batch_size, cfg.train.seed)?;
    let val = data.validation_batch(cfg.train.val_samples)?;
    fs::create_dir_all(run_dir).at(run_dir)?;
    write_json(&run_dir.join(CONFIG_FILE), cfg)?;
    let log_path = run_dir.join(LOG_FILE);

    let (mut trainer, val_sim_initial, mut rows) = match resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if ck.header.train.mode != cfg.train.mode || ck.header.train.arch != cfg.train.arch {
                return Err(Error::Config(format!(
                    "checkpoint {} was trained as {} with a different architecture or mode",
                    path.display(),
                    ck.header.mode
                )));
            }
            let mut rows = if log_path.is_file() { read_log(&log_path)? } else { Vec::new() };
            rows.retain(|r| r.step <= ck.header.step);
            (ck.trainer, ck.header.val_sim_initial, rows)
        }
        None => {
            let model = ModelBundle::new(mode, cfg.train.arch.into(), cfg.train.seed)?;
            let initial = val_sim(cfg, &model, &val)?;
            (Trainer::new(model, cfg.train.step_config(&cfg.lncc))?, initial, Vec::new())
        }
    };
    trainer.config = cfg.train.step_config(&cfg.lncc);
    write_log(&log_path, &rows)?;
    // checkpoints past the starting point belong to an abandoned run
    for (s, p) in checkpoint::list(run_dir)? {
        if s > trainer.step || resume.is_none() {
            fs::remove_file(&p).at(&p)?;
        }
    }

    let wall_offset = rows.last().map_or(0.0, |r| r.wall_seconds);
    let started = Instant::now();
    let max = cfg.train.max_steps;
    let mut last_metrics = None;
    let mut final_checkpoint = checkpoint::list(run_dir)?
        .into_iter()
        .rev()
        .find(|(s, _)| *s == trainer.step)
        .map(|(_, p)| p);
    let mut log = csv::WriterBuilder::new().has_headers(rows.is_empty()).from_writer(
        fs::OpenOptions::new().append(true).open(&log_path).at(&log_path)?,
    );
    while trainer.step < max {
        let (x_a, y) = data.batch(&schedule, trainer.step)?;
        let metrics = trainer.step(&x_a, &y)?;
        let step = trainer.step;
        let validate = step % cfg.train.val_every == 0 || step == max;
        let vs = if validate { val_sim(cfg, &trainer.model, &val)? } else { None };
        let row = LogRow::new(&metrics, vs, wall_offset + started.elapsed().as_secs_f64());
        log.serialize(&row)?;
        log.flush().at(&log_path)?;
        on_row(&row);
        rows.push(row);
        if step % cfg.train.checkpoint_every == 0 || step == max {
            let path = run_dir.join(checkpoint::file_name(step));
            checkpoint::save(&path, &trainer, &cfg.train, &cfg.lncc, val_sim_initial)?;
            final_checkpoint = Some(path);
        }
        last_metrics = Some(metrics);
    }
    let final_checkpoint = match final_checkpoint {
        Some(p) => p,
        None => {
            // resumed at (or past) max_steps without a matching file: persist the state as is
            let path = run_dir.join(checkpoint::file_name(trainer.step));
            checkpoint::save(&path, &trainer, &cfg.train, &cfg.lncc, val_sim_initial)?;
            path
        }
    };
    let last = rows.last();
    let summary = Summary {
        mode: mode.as_str().into(),
        steps: trainer.step,
        final_checkpoint: final_checkpoint.clone(),
        val_sim_initial,
        val_sim_final: rows.iter().rev().find_map(|r| r.val_sim),
        final_total: last.map(|r| r.total),
        d_real_clean_logit: last_metrics.map(|m| m.d_real_clean_logit),
        d_fake_clean_logit: last_metrics.map(|m| m.d_fake_clean_logit),
        wall_seconds: last.map_or(0.0, |r| r.wall_seconds),
    };
    write_json(&run_dir.join(SUMMARY_FILE), &summary)?;
    Ok(TrainOutcome {
        final_checkpoint,
        summary,
        rows,
    })
}
