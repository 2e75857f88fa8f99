//! Image quality and overlap metrics on normalised intensities.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

/// Dynamic range of intensities in `[-1, 1]`.
pub const DYNAMIC_RANGE: f64 = 2.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population (1/n) standard deviation, two-pass.
pub fn population_std(values: &[f64]) -> f64 {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Standard deviation of CT intensities inside an ROI.
pub fn sigma_ct(img_ct: &Grid<f64>, roi: &Mask) -> Result<f64> {
    let values = img_ct.masked_values(roi)?;
    if values.len() < 2 {
        return Err(Error::Empty(alloc::format!(
            "ROI has {} pixel(s), need at least 2",
            values.len()
        )));
    }
    Ok(population_std(&values))
}

/// Mean squared error over all pixels, or over pixels outside `exclude`.
pub fn mse(a: &Grid<f64>, b: &Grid<f64>, exclude: Option<&Mask>) -> Result<f64> {
    a.check_same_shape(b, "mse")?;
    if let Some(m) = exclude {
        a.check_same_shape(m, "mse mask")?;
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        if exclude.is_some_and(|m| m.as_slice()[i]) {
            continue;
        }
        let d = a.as_slice()[i] - b.as_slice()[i];
        acc += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no pixels left for mse".into()));
    }
    Ok(acc / n as f64)
}

/// PSNR in dB for range [`DYNAMIC_RANGE`]; identical inputs give `+inf`.
pub fn psnr(a: &Grid<f64>, b: &Grid<f64>, exclude: Option<&Mask>) -> Result<f64> {
    let e = mse(a, b, exclude)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / e).log10())
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable 'valid' filtering: output is `(w - k + 1) × (h - k + 1)`.
fn filter_valid(img: &Grid<f64>, k: &[f64]) -> Grid<f64> {
    let (w, h) = (img.width(), img.height());
    let kw = k.len();
    let ow = w + 1 - kw;
    let oh = h + 1 - kw;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..kw).map(|t| k[t] * img[(x + t, y)]).sum();
        }
    }
    Grid::from_fn(ow, oh, |x, y| (0..kw).map(|t| k[t] * tmp[(y + t) * ow + x]).sum())
}

/// Mean SSIM with an 11-pixel Gaussian window (σ = 1.5), over window centres
/// that fit inside the image. Window centres on `exclude` are skipped.
pub fn ssim(a: &Grid<f64>, b: &Grid<f64>, exclude: Option<&Mask>) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(alloc::format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"
        )));
    }
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let mu_a = filter_valid(a, &k);
    let mu_b = filter_valid(b, &k);
    let aa = filter_valid(&a.map(|v| v * v), &k);
    let bb = filter_valid(&b.map(|v| v * v), &k);
    let ab = filter_valid(&a.zip_map(b, |x, y| x * y)?, &k);
    let c1 = (SSIM_K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE).powi(2);
    let half = SSIM_WINDOW / 2;
    let mut acc = 0.0;
    let mut n = 0usize;
    for y in 0..mu_a.height() {
        for x in 0..mu_a.width() {
            if exclude.is_some_and(|m| m[(x + half, y + half)]) {
                continue;
            }
            let (ma, mb) = (mu_a[(x, y)], mu_b[(x, y)]);
            let va = aa[(x, y)] - ma * ma;
            let vb = bb[(x, y)] - mb * mb;
            let cov = ab[(x, y)] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no window centres left for ssim".into()));
    }
    Ok(acc / n as f64)
}

/// `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    a.check_same_shape(b, "dice")?;
    let inter = a.and(b)?.count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Index of the tissue intensity closest to `v` (ties go to the lower class).
pub fn nearest_class(v: f64, tissue_intensity: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, t) in tissue_intensity.iter().enumerate() {
        let d = (v - t).abs();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Per-class Dice inside the void after nearest-intensity classification of
/// `corrected_mr`. Classes absent from both prediction and truth in the void
/// are `None`.
pub fn void_label_dice(
    corrected_mr: &Grid<f64>,
    labels: &Grid<u8>,
    void_mask: &Mask,
    tissue_intensity_mr: &[f64],
) -> Result<Vec<Option<f64>>> {
    corrected_mr.check_same_shape(labels, "labels")?;
    corrected_mr.check_same_shape(void_mask, "void mask")?;
    if !void_mask.any() {
        return Err(Error::Empty("void mask".into()));
    }
    let nc = tissue_intensity_mr.len();
    let mut inter = vec![0usize; nc];
    let mut pred = vec![0usize; nc];
    let mut truth = vec![0usize; nc];
    for i in 0..corrected_mr.len() {
        if !void_mask.as_slice()[i] {
            continue;
        }
        let p = nearest_class(corrected_mr.as_slice()[i], tissue_intensity_mr);
        let t = labels.as_slice()[i] as usize;
        pred[p] += 1;
        if t < nc {
            truth[t] += 1;
            if p == t {
                inter[t] += 1;
            }
        }
    }
    Ok((0..nc)
        .map(|k| {
            let total = pred[k] + truth[k];
            (total > 0).then(|| 2.0 * inter[k] as f64 / total as f64)
        })
        .collect())
}

/// Mean of the present non-background entries of a per-class Dice vector.
pub fn mean_tissue_dice(per_class: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = per_class.iter().skip(1).filter_map(|d| *d).collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Mean absolute difference over the pixels of `region`.
pub fn masked_mae(a: &Grid<f64>, b: &Grid<f64>, region: &Mask) -> Result<f64> {
    a.check_same_shape(b, "mae")?;
    let va = a.masked_values(region)?;
    let vb = b.masked_values(region)?;
    if va.is_empty() {
        return Err(Error::Empty("mae region".into()));
    }
    Ok(va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).sum::<f64>() / va.len() as f64)
}
