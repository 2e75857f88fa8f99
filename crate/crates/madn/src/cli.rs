//! The `madn` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use madn_core::Domain;

use crate::config::RunConfig;
use crate::dataset::{build_dataset, Dataset};
use crate::error::Result;
use crate::eval::{evaluate, read_report, write_report, EvaluationReport, Method};
use crate::io::{read_slice, with_ext, write_slice};
use crate::plot::plot;
use crate::train::train;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "madn", version, about = "Unsupervised multimodal CT/MR metal artefact reduction on synthetic phantoms")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration (see config.schema.json); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set train.max_steps=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the unpaired training splits and the paired test split.
    GenData {
        /// Dataset directory [default: paths.dataset_dir or <output_root>/dataset].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train one model (mode from train.mode).
    Train {
        /// Dataset directory [default: paths.dataset_dir or <output_root>/dataset].
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Run directory [default: paths.run_dir or <output_root>/<mode>].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Continue from this checkpoint instead of a fresh initialisation.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
        /// Print every log row instead of every 50th.
        #[arg(long)]
        verbose: bool,
    },
    /// Correct one corrupted slice with a trained model.
    Correct {
        /// Trained checkpoint.
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        /// Input image stem (reads <STEM>.raw and <STEM>.json).
        #[arg(long, value_name = "STEM")]
        input: PathBuf,
        /// Output image stem.
        #[arg(long, value_name = "STEM")]
        out: PathBuf,
    },
    /// Evaluate No MAR and any number of checkpoints on the test split.
    Eval {
        /// Trained checkpoints, one per method. Repeatable.
        #[arg(long = "checkpoint", value_name = "CKPT")]
        checkpoints: Vec<PathBuf>,
        /// Dataset directory holding the test split [default: paths.dataset_dir or <output_root>/dataset].
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Report directory [default: <output_root>/eval].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Leave the uncorrected baseline out of the report.
        #[arg(long)]
        no_baseline: bool,
    },
    /// Render method panels and σ_CT bar charts from an evaluation report.
    Plot {
        /// Report directory written by `eval`.
        #[arg(long, value_name = "DIR")]
        report: PathBuf,
        /// Dataset directory the report was computed on [default: paths.dataset_dir or <output_root>/dataset].
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Figure directory [default: <REPORT>/figures].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration (defaults, file, overrides) as JSON.
    ShowConfig,
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::load(cli.common.config.as_deref(), &cli.common.overrides).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match execute(cli.command, &cfg) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(cfg).expect("config serialises"));
        }
        Command::GenData { out } => {
            let dir = out.unwrap_or_else(|| cfg.dataset_dir());
            let m = build_dataset(&cfg.phantom, &cfg.dataset, &dir)?;
            println!("{}", dir.join(crate::dataset::MANIFEST).display());
            eprintln!(
                "{} clean, {} corrupted, {} test samples; mean test PSNR(corrupted CT) = {:.2} dB",
                m.train_clean.len(),
                m.train_corrupted.len(),
                m.test.len(),
                m.test_mean_psnr_ct
            );
        }
        Command::Train {
            data,
            out,
            resume,
            verbose,
        } => {
            let data = data.unwrap_or_else(|| cfg.dataset_dir());
            let out = out.unwrap_or_else(|| cfg.run_dir());
            let outcome = train(cfg, &data, &out, resume.as_deref(), |r| {
                if verbose || r.step % 50 == 0 || r.step == 1 {
                    let vs = r.val_sim.map_or(String::new(), |v| format!(" val_sim {v:.4}"));
                    eprintln!(
                        "step {:6} total {:.4} rec {:.4} art {:.4} cycle {:.4} adv {:.3}/{:.3} d {:.3}/{:.3}{vs} [{:.0}s]",
                        r.step, r.total, r.rec, r.art, r.cycle, r.adv_clean, r.adv_corrupted, r.d_clean, r.d_corrupted, r.wall_seconds
                    );
                }
            })?;
            println!("{}", outcome.final_checkpoint.display());
        }
        Command::Correct { checkpoint, input, out } => {
            let method = Method::from_checkpoint(&checkpoint)?;
            let (slice, sidecar) = read_slice(&input)?;
            if slice.domain != Domain::Corrupted {
                eprintln!("warning: {} is tagged {}", input.display(), slice.domain.as_str());
            }
            let corrected = method.apply(&slice)?;
            write_slice(&out, &corrected, sidecar.seed)?;
            println!("{}", with_ext(&out, "raw").display());
        }
        Command::Eval {
            checkpoints,
            data,
            out,
            no_baseline,
        } => {
            let ds = Dataset::open(&data.unwrap_or_else(|| cfg.dataset_dir()))?;
            let mut methods = Vec::new();
            if !no_baseline {
                methods.push(Method::NoMar);
            }
            for c in &checkpoints {
                methods.push(Method::from_checkpoint(c)?);
            }
            let out = out.unwrap_or_else(|| cfg.paths.output_root.join("eval"));
            let report = evaluate(&methods, &ds, Some(&out))?;
            write_report(&report, &out)?;
            eprint!("{}", report_table(&report));
            println!("{}", out.join(crate::eval::SUMMARY_FILE).display());
        }
        Command::Plot { report, data, out } => {
            let rep = read_report(&report)?;
            let ds = Dataset::open(&data.unwrap_or_else(|| cfg.dataset_dir()))?;
            let out = out.unwrap_or_else(|| report.join("figures"));
            let written = plot(&rep, &ds, &report, &out, &cfg.plot)?;
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

/// Mean of every metric per method, with `*` where the paired test against
/// the reference method gives p < 0.05.
pub fn report_table(r: &EvaluationReport) -> String {
    let w = r.metrics.iter().map(|k| k.len()).max().unwrap_or(0).max(6) + 2;
    let mut s = format!("{:<w$}", "metric");
    for m in &r.methods {
        s += &format!("{m:>18}");
    }
    s.push('\n');
    for k in &r.metrics {
        s += &format!("{k:<w$}");
        for m in &r.methods {
            let v = r.summary_of(m, k).and_then(|x| x.mean.or(x.median));
            let star = if r.test_of(m, k).is_some_and(|t| t.significant(0.05)) { "*" } else { " " };
            s += &match v {
                Some(v) => format!("{:>17.4}{star}", v),
                None => format!("{:>18}", "-"),
            };
        }
        s.push('\n');
    }
    s
}
