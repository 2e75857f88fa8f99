//! Locally normalised cross correlation with a separable Gaussian window.
//!
//! All local statistics are Gaussian-weighted averages `K∗f` computed by two
//! 1D passes with reflect padding, so LNCC costs five separable blurs:
//!
//! ```text
//! LNCC = (K∗(ab) − K∗a·K∗b) / sqrt((var_K(a) + ε)(var_K(b) + ε))
//! ```
//!
//! The similarity loss is `1 − mean|LNCC|` over every pixel. Its gradient is
//! propagated back through the blurs with the adjoint (transposed) operator,
//! which differs from `K` near the borders because of the reflection.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LnccConfig {
    pub sigma: f64,
    pub truncation_radius: usize,
    pub epsilon: f64,
}

impl Default for LnccConfig {
    fn default() -> Self {
        Self {
            sigma: 5.0,
            truncation_radius: 15,
            epsilon: 1e-5,
        }
    }
}

impl LnccConfig {
    /// Window with the minimal truncation radius `ceil(3σ)`.
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            truncation_radius: (3.0 * sigma).ceil() as usize,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("sigma must be > 0, got {}", self.sigma)));
        }
        if (self.truncation_radius as f64) < (3.0 * self.sigma).ceil() {
            return Err(Error::InvalidConfig(alloc::format!(
                "truncation_radius {} is below ceil(3 sigma)",
                self.truncation_radius
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Normalised 1D Gaussian of length `2·radius + 1`.
pub fn gaussian_kernel(cfg: &LnccConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let r = cfg.truncation_radius as isize;
    let mut w: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * cfg.sigma * cfg.sigma)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    // mirror to make symmetry exact under rounding of the division
    let len = w.len();
    for i in 0..len / 2 {
        w[len - 1 - i] = w[i];
    }
    Ok(w)
}

/// Mirror index without edge repetition (`-1 → 1`, `n → n-2`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Precomputed separable window; `apply` is `K∗f` and `adjoint` is `Kᵀ g`.
#[derive(Clone, Debug)]
pub struct Window {
    weights: Vec<f64>,
    radius: isize,
}

impl Window {
    pub fn new(cfg: &LnccConfig) -> Result<Self> {
        Ok(Self {
            weights: gaussian_kernel(cfg)?,
            radius: cfg.truncation_radius as isize,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, img: &Grid<f64>) -> Grid<f64> {
        let (w, h) = (img.width(), img.height());
        let src = img.as_slice();
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (t, k) in self.weights.iter().enumerate() {
                    acc += k * row[reflect(x as isize + t as isize - self.radius, w)];
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for (t, k) in self.weights.iter().enumerate() {
                let sy = reflect(y as isize + t as isize - self.radius, h);
                let (dst, srow) = (&mut out[y * w..(y + 1) * w], &tmp[sy * w..(sy + 1) * w]);
                for x in 0..w {
                    dst[x] += k * srow[x];
                }
            }
        }
        Grid::from_vec(w, h, out).expect("shape preserved")
    }

    pub fn adjoint(&self, g: &Grid<f64>) -> Grid<f64> {
        let (w, h) = (g.width(), g.height());
        let src = g.as_slice();
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for (t, k) in self.weights.iter().enumerate() {
                let sy = reflect(y as isize + t as isize - self.radius, h);
                for x in 0..w {
                    tmp[sy * w + x] += k * src[y * w + x];
                }
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let v = tmp[y * w + x];
                for (t, k) in self.weights.iter().enumerate() {
                    out[y * w + reflect(x as isize + t as isize - self.radius, w)] += k * v;
                }
            }
        }
        Grid::from_vec(w, h, out).expect("shape preserved")
    }
}

fn check_finite(img: &Grid<f64>, what: &str) -> Result<()> {
    if img.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Local Gaussian mean and variance (floored at zero).
pub fn local_moments(img: &Grid<f64>, cfg: &LnccConfig) -> Result<(Grid<f64>, Grid<f64>)> {
    check_finite(img, "local_moments input")?;
    let k = Window::new(cfg)?;
    let mean = k.apply(img);
    let sq = k.apply(&img.map(|v| v * v));
    let var = sq.zip_map(&mean, |s, m| (s - m * m).max(0.0))?;
    Ok((mean, var))
}

struct Moments {
    ma: Grid<f64>,
    mb: Grid<f64>,
    va: Grid<f64>,
    vb: Grid<f64>,
    va_clamped: Vec<bool>,
    vb_clamped: Vec<bool>,
    lncc: Grid<f64>,
}

fn moments(a: &Grid<f64>, b: &Grid<f64>, k: &Window, eps: f64) -> Result<Moments> {
    a.check_same_shape(b, "lncc inputs")?;
    check_finite(a, "lncc input a")?;
    check_finite(b, "lncc input b")?;
    let ma = k.apply(a);
    let mb = k.apply(b);
    let saa = k.apply(&a.map(|v| v * v));
    let sbb = k.apply(&b.map(|v| v * v));
    let sab = k.apply(&a.zip_map(b, |x, y| x * y)?);
    let n = a.len();
    let mut va = Grid::zeros(a.width(), a.height());
    let mut vb = Grid::zeros(a.width(), a.height());
    let mut lncc = Grid::zeros(a.width(), a.height());
    let mut va_clamped = vec![false; n];
    let mut vb_clamped = vec![false; n];
    for i in 0..n {
        let (m1, m2) = (ma.as_slice()[i], mb.as_slice()[i]);
        let raw_a = saa.as_slice()[i] - m1 * m1;
        let raw_b = sbb.as_slice()[i] - m2 * m2;
        va_clamped[i] = raw_a < 0.0;
        vb_clamped[i] = raw_b < 0.0;
        let v1 = raw_a.max(0.0);
        let v2 = raw_b.max(0.0);
        let cov = sab.as_slice()[i] - m1 * m2;
        va.as_mut_slice()[i] = v1;
        vb.as_mut_slice()[i] = v2;
        lncc.as_mut_slice()[i] = cov / ((v1 + eps) * (v2 + eps)).sqrt();
    }
    Ok(Moments {
        ma,
        mb,
        va,
        vb,
        va_clamped,
        vb_clamped,
        lncc,
    })
}

/// Per-pixel LNCC of `a` and `b`.
pub fn lncc_map(a: &Grid<f64>, b: &Grid<f64>, cfg: &LnccConfig) -> Result<Grid<f64>> {
    let k = Window::new(cfg)?;
    Ok(moments(a, b, &k, cfg.epsilon)?.lncc)
}

/// `1 − mean|LNCC(x_ct, x_mr)|`.
pub fn sim_loss(x_ct: &Grid<f64>, x_mr: &Grid<f64>, cfg: &LnccConfig) -> Result<f64> {
    let map = lncc_map(x_ct, x_mr, cfg)?;
    Ok(1.0 - map.iter().map(|v| v.abs()).sum::<f64>() / map.len() as f64)
}

/// Similarity loss and its gradients with respect to both inputs.
pub fn sim_loss_grad(
    x_ct: &Grid<f64>,
    x_mr: &Grid<f64>,
    cfg: &LnccConfig,
) -> Result<(f64, Grid<f64>, Grid<f64>)> {
    let k = Window::new(cfg)?;
    let eps = cfg.epsilon;
    let m = moments(x_ct, x_mr, &k, eps)?;
    let n = x_ct.len();
    let (w, h) = (x_ct.width(), x_ct.height());
    let loss = 1.0 - m.lncc.iter().map(|v| v.abs()).sum::<f64>() / n as f64;

    // cotangents of the five blurred statistics
    let mut g_ma = Grid::zeros(w, h);
    let mut g_mb = Grid::zeros(w, h);
    let mut g_saa = Grid::zeros(w, h);
    let mut g_sbb = Grid::zeros(w, h);
    let mut g_sab = Grid::zeros(w, h);
    for i in 0..n {
        let l = m.lncc.as_slice()[i];
        let g = if l > 0.0 {
            -1.0 / n as f64
        } else if l < 0.0 {
            1.0 / n as f64
        } else {
            0.0
        };
        if g == 0.0 {
            continue;
        }
        let (v1, v2) = (m.va.as_slice()[i], m.vb.as_slice()[i]);
        let (m1, m2) = (m.ma.as_slice()[i], m.mb.as_slice()[i]);
        let denom = ((v1 + eps) * (v2 + eps)).sqrt();
        let g_cov = g / denom;
        let g_va = if m.va_clamped[i] { 0.0 } else { -0.5 * g * l / (v1 + eps) };
        let g_vb = if m.vb_clamped[i] { 0.0 } else { -0.5 * g * l / (v2 + eps) };
        g_sab.as_mut_slice()[i] = g_cov;
        g_saa.as_mut_slice()[i] = g_va;
        g_sbb.as_mut_slice()[i] = g_vb;
        g_ma.as_mut_slice()[i] = -g_cov * m2 - 2.0 * m1 * g_va;
        g_mb.as_mut_slice()[i] = -g_cov * m1 - 2.0 * m2 * g_vb;
    }
    let t_ma = k.adjoint(&g_ma);
    let t_mb = k.adjoint(&g_mb);
    let t_saa = k.adjoint(&g_saa);
    let t_sbb = k.adjoint(&g_sbb);
    let t_sab = k.adjoint(&g_sab);
    let a = x_ct.as_slice();
    let b = x_mr.as_slice();
    let grad_a = Grid::from_fn(w, h, |x, y| {
        let i = y * w + x;
        t_ma.as_slice()[i] + 2.0 * a[i] * t_saa.as_slice()[i] + b[i] * t_sab.as_slice()[i]
    });
    let grad_b = Grid::from_fn(w, h, |x, y| {
        let i = y * w + x;
        t_mb.as_slice()[i] + 2.0 * b[i] * t_sbb.as_slice()[i] + a[i] * t_sab.as_slice()[i]
    });
    Ok((loss, grad_a, grad_b))
}
