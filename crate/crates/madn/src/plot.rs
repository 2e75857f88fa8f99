//! Raster figures: per-sample method panels and per-ROI σ_CT bar charts.
//!
//! PNGs carry no text; each figure has a JSON sidecar naming its columns or
//! bars, their values and, for bar charts, which bars carry a significance star.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use madn_core::{Grid, Modality};
use serde::{Deserialize, Serialize};

use crate::config::PlotConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{sigma_ct_metric, EvaluationReport, CORRECTED_DIR, NO_MAR, SIGMA_CT_MEAN};
use crate::io::{read_slice, write_json};

const MISSING: Rgb<u8> = Rgb([40, 0, 40]);
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([120, 120, 120]),
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
    Rgb([214, 39, 40]),
];
const STAR: [&str; 7] = ["...#...", "...#...", "#######", ".#####.", "..###..", ".##.##.", "##...##"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSidecar {
    pub sample: usize,
    /// Left to right; `ground_truth` first.
    pub columns: Vec<String>,
    /// Top to bottom.
    pub rows: Vec<String>,
    pub tile_size: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub method: String,
    pub mean: f64,
    pub std: f64,
    /// p-value of the paired test against the reference method.
    pub p: Option<f64>,
    pub star: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarSidecar {
    pub metric: String,
    pub reference: Option<String>,
    pub alpha: f64,
    /// Left to right.
    pub bars: Vec<Bar>,
    /// Pixels per unit of σ_CT.
    pub y_scale: f64,
}

fn gray(v: f64) -> Rgb<u8> {
    let g = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
    Rgb([g, g, g])
}

fn blit(img: &mut RgbImage, tile: Option<&Grid<f64>>, x0: u32, y0: u32, n: u32, scale: u32) {
    for y in 0..n * scale {
        for x in 0..n * scale {
            let c = match tile {
                Some(t) => gray(t[((x / scale) as usize, (y / scale) as usize)]),
                None => MISSING,
            };
            img.put_pixel(x0 + x, y0 + y, c);
        }
    }
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, c: Rgb<u8>) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

fn draw_star(img: &mut RgbImage, cx: u32, top: u32) {
    for (dy, row) in STAR.iter().enumerate() {
        for (dx, ch) in row.chars().enumerate() {
            if ch == '#' {
                let (x, y) = (cx + dx as u32 - 3, top + dy as u32);
                img.put_pixel(x, y, AXIS);
            }
        }
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.into(),
            source,
        })?;
    }
    img.save(path)?;
    Ok(())
}

/// Bars of one σ metric in report method order, stars where `p < alpha`.
pub fn sigma_bars(report: &EvaluationReport, metric: &str, alpha: f64) -> Vec<Bar> {
    report
        .methods
        .iter()
        .filter_map(|m| {
            let s = report.summary_of(m, metric)?;
            let p = report.test_of(m, metric).and_then(|t| t.p);
            Some(Bar {
                method: m.clone(),
                mean: s.mean?,
                std: s.std.unwrap_or(0.0),
                p,
                star: p.is_some_and(|p| p < alpha),
            })
        })
        .collect()
}

fn bar_chart(bars: &[Bar]) -> (RgbImage, f64) {
    const BAR_W: u32 = 36;
    const GAP: u32 = 18;
    const PLOT_H: u32 = 200;
    const TOP: u32 = 24;
    const MARGIN: u32 = 16;
    let w = MARGIN * 2 + bars.len() as u32 * (BAR_W + GAP);
    let h = TOP + PLOT_H + MARGIN;
    let mut img = RgbImage::from_pixel(w, h, BACKGROUND);
    let top_value = bars.iter().map(|b| b.mean + b.std).fold(0.0, f64::max);
    let scale = if top_value > 0.0 { PLOT_H as f64 / top_value } else { 1.0 };
    let base = TOP + PLOT_H;
    fill(&mut img, MARGIN - 2, TOP, 1, PLOT_H + 1, AXIS);
    fill(&mut img, MARGIN - 2, base, w - 2 * MARGIN + 4, 1, AXIS);
    for (i, b) in bars.iter().enumerate() {
        let x0 = MARGIN + GAP / 2 + i as u32 * (BAR_W + GAP);
        let bh = (b.mean * scale).round() as u32;
        fill(&mut img, x0, base - bh, BAR_W, bh, PALETTE[i % PALETTE.len()]);
        let hi = ((b.mean + b.std) * scale).round() as u32;
        let lo = ((b.mean - b.std).max(0.0) * scale).round() as u32;
        let cx = x0 + BAR_W / 2;
        fill(&mut img, cx, base - hi, 1, hi - lo + 1, AXIS);
        fill(&mut img, cx - 4, base - hi, 9, 1, AXIS);
        if b.star {
            draw_star(&mut img, cx, (base - hi).saturating_sub(10));
        }
    }
    (img, scale)
}

/// Writes all enabled figures into `out_dir` and returns their paths.
/// `report_dir` must hold the corrected slices written by `eval`.
pub fn plot(report: &EvaluationReport, ds: &Dataset, report_dir: &Path, out_dir: &Path, cfg: &PlotConfig) -> Result<Vec<PathBuf>> {
    if report.methods.is_empty() || report.rows.is_empty() {
        return Err(Error::Config("report has no methods to plot".into()));
    }
    let mut written = Vec::new();
    if cfg.sigma_bars {
        let mut metrics: Vec<String> = report.roi_names.iter().map(|r| sigma_ct_metric(r)).collect();
        metrics.push(SIGMA_CT_MEAN.into());
        for metric in metrics {
            let bars = sigma_bars(report, &metric, cfg.alpha);
            if bars.is_empty() {
                continue;
            }
            let (img, y_scale) = bar_chart(&bars);
            let path = out_dir.join(format!("{metric}.png"));
            save(&img, &path)?;
            write_json(
                &path.with_extension("json"),
                &BarSidecar {
                    metric,
                    reference: report.reference.clone(),
                    alpha: cfg.alpha,
                    bars,
                    y_scale,
                },
            )?;
            written.push(path);
        }
    }
    if cfg.panels {
        let rows = [Modality::Ct, Modality::Mr];
        let mut columns = vec!["ground_truth".to_string()];
        columns.extend(report.methods.iter().cloned());
        let samples: Vec<usize> = {
            let mut s: Vec<usize> = report.rows.iter().map(|r| r.sample).collect();
            s.sort_unstable();
            s.dedup();
            s.into_iter().take(cfg.max_panels).collect()
        };
        for sample in samples {
            let t = ds.test_sample(sample)?;
            let n = t.clean.width() as u32;
            let (tile, pad) = (n * cfg.scale, 4u32);
            let w = columns.len() as u32 * (tile + pad) + pad;
            let h = rows.len() as u32 * (tile + pad) + pad;
            let mut img = RgbImage::from_pixel(w, h, BACKGROUND);
            for (ci, col) in columns.iter().enumerate() {
                let slice = if ci == 0 {
                    t.clean.clone()
                } else if col == NO_MAR {
                    t.corrupted.clone()
                } else {
                    read_slice(&report_dir.join(CORRECTED_DIR).join(col).join(format!("{sample:06}")))?.0
                };
                for (ri, m) in rows.iter().enumerate() {
                    let x0 = pad + ci as u32 * (tile + pad);
                    let y0 = pad + ri as u32 * (tile + pad);
                    blit(&mut img, slice.channel(*m), x0, y0, n, cfg.scale);
                }
            }
            let path = out_dir.join(format!("panel_{sample:06}.png"));
            save(&img, &path)?;
            write_json(
                &path.with_extension("json"),
                &PanelSidecar {
                    sample,
                    columns: columns.clone(),
                    rows: rows.iter().map(|m| m.as_str().to_string()).collect(),
                    tile_size: tile,
                },
            )?;
            written.push(path);
        }
    }
    Ok(written)
}
