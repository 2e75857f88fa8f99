//! Parallel-beam projection and filtered back-projection.
//!
//! Pixel `(x, y)` has its centre at `(x - c, y - c)` with `c = (n - 1) / 2`.
//! Projection angle `θ` integrates along direction `(-sin θ, cos θ)` at
//! detector offset `s` measured along `(cos θ, sin θ)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fft::fft_in_place;
use crate::grid::Grid;

/// Ray sampling step in pixels.
pub const RAY_STEP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    n_angles: usize,
    n_detectors: usize,
    values: Vec<f64>,
    angles: Vec<f64>,
    detector_spacing: f64,
}

impl Sinogram {
    pub fn new(n_angles: usize, n_detectors: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_angles * n_detectors {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n_angles}x{n_detectors} sinogram",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sinogram".into()));
        }
        Ok(Self {
            n_angles,
            n_detectors,
            values,
            angles: uniform_angles(n_angles),
            detector_spacing: 1.0,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        &self.values[angle * self.n_detectors..(angle + 1) * self.n_detectors]
    }

    /// Signed offset of detector `j` from the rotation centre.
    pub fn offset(&self, j: usize) -> f64 {
        (j as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= factor);
        s
    }
}

pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| PI * i as f64 / n as f64).collect()
}

/// Detector count needed to cover the diagonal of an `n × n` image, rounded
/// up to the parity of `n` so axis-aligned rays pass through pixel centres.
pub fn min_detectors(n: usize) -> usize {
    let d = (n as f64 * core::f64::consts::SQRT_2).ceil() as usize;
    d + (d + n) % 2
}

#[inline]
fn bilinear(img: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let n_i = n as isize;
    let at = |xx: isize, yy: isize| -> f64 {
        if xx < 0 || yy < 0 || xx >= n_i || yy >= n_i {
            0.0
        } else {
            img[(yy * n_i + xx) as usize]
        }
    };
    let v00 = at(x0, y0);
    let v10 = at(x0 + 1, y0);
    let v01 = at(x0, y0 + 1);
    let v11 = at(x0 + 1, y0 + 1);
    (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
}

/// Line integrals by bilinear ray sampling at [`RAY_STEP`].
pub fn radon(image: &Grid<f64>, n_angles: usize, n_detectors: usize) -> Result<Sinogram> {
    if !image.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "radon needs a square image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    if !image.all_finite() {
        return Err(Error::NonFinite("radon input".into()));
    }
    if n_angles == 0 {
        return Err(Error::InvalidConfig("n_angles must be >= 1".into()));
    }
    let n = image.width();
    if n_detectors < min_detectors(n) {
        return Err(Error::InvalidConfig(format!(
            "{n_detectors} detectors do not cover the {n}x{n} diagonal"
        )));
    }
    let c = (n as f64 - 1.0) / 2.0;
    // rays leave the image once |t| exceeds the half diagonal plus one pixel
    let half_len = n as f64 * core::f64::consts::FRAC_1_SQRT_2 + 1.0;
    let n_steps = (2.0 * half_len / RAY_STEP).ceil() as usize + 1;
    let t0 = -(n_steps as f64 - 1.0) * RAY_STEP / 2.0;
    let img = image.as_slice();
    let angles = uniform_angles(n_angles);
    let mut values = vec![0.0; n_angles * n_detectors];
    for (i, &theta) in angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        for j in 0..n_detectors {
            let s = j as f64 - (n_detectors as f64 - 1.0) / 2.0;
            let mut acc = 0.0;
            for k in 0..n_steps {
                let t = t0 + k as f64 * RAY_STEP;
                let x = c + s * cos - t * sin;
                let y = c + s * sin + t * cos;
                if x > -1.0 && y > -1.0 && x < n as f64 && y < n as f64 {
                    acc += bilinear(img, n, x, y);
                }
            }
            values[i * n_detectors + j] = acc * RAY_STEP;
        }
    }
    Sinogram::new(n_angles, n_detectors, values)
}

/// Frequency-domain ramp filter used by [`fbp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RampFilter {
    #[default]
    RamLak,
    Hann,
}

/// Filter response on an FFT grid of length `len`: the transform of the
/// band-limited spatial ramp kernel, optionally apodised by a Hann window.
fn ramp_response(len: usize, filter: RampFilter, spacing: f64) -> Vec<f64> {
    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    for (i, k) in kernel.iter_mut().enumerate() {
        let n = if i <= len / 2 { i as isize } else { i as isize - len as isize };
        let h = if n == 0 {
            1.0 / (4.0 * spacing * spacing)
        } else if n % 2 == 0 {
            0.0
        } else {
            -1.0 / ((n as f64) * (n as f64) * PI * PI * spacing * spacing)
        };
        *k = Complex64::new(h, 0.0);
    }
    fft_in_place(&mut kernel, false);
    kernel
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = if i <= len / 2 { i as f64 } else { i as f64 - len as f64 } / len as f64;
            let window = match filter {
                RampFilter::RamLak => 1.0,
                RampFilter::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
            };
            v.re * window
        })
        .collect()
}

/// Ramp-filtered back-projection onto an `image_size × image_size` grid.
pub fn fbp(sino: &Sinogram, image_size: usize, filter: RampFilter) -> Result<Grid<f64>> {
    if sino.n_angles == 0 || sino.n_detectors == 0 || sino.values.is_empty() {
        return Err(Error::Empty("sinogram".into()));
    }
    if image_size == 0 {
        return Err(Error::InvalidConfig("image_size must be >= 1".into()));
    }
    let nd = sino.n_detectors;
    let len = (2 * nd).next_power_of_two();
    let response = ramp_response(len, filter, sino.detector_spacing);
    let mut filtered = vec![0.0; sino.n_angles * nd];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for a in 0..sino.n_angles {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (b, v) in buf.iter_mut().zip(sino.row(a)) {
            *b = Complex64::new(*v, 0.0);
        }
        fft_in_place(&mut buf, false);
        for (b, h) in buf.iter_mut().zip(response.iter()) {
            *b *= *h;
        }
        fft_in_place(&mut buf, true);
        for (j, f) in filtered[a * nd..(a + 1) * nd].iter_mut().enumerate() {
            *f = buf[j].re * sino.detector_spacing;
        }
    }

    let c = (image_size as f64 - 1.0) / 2.0;
    let mid = (nd as f64 - 1.0) / 2.0;
    let trig: Vec<(f64, f64)> = sino.angles.iter().map(|t| t.sin_cos()).collect();
    let scale = PI / sino.n_angles as f64;
    let out = Grid::from_fn(image_size, image_size, |x, y| {
        let px = x as f64 - c;
        let py = y as f64 - c;
        let mut acc = 0.0;
        for (a, (sin, cos)) in trig.iter().enumerate() {
            let u = (px * cos + py * sin) / sino.detector_spacing + mid;
            let u0 = u.floor();
            let f = u - u0;
            let j = u0 as isize;
            let row = &filtered[a * nd..(a + 1) * nd];
            let at = |k: isize| if k < 0 || k >= nd as isize { 0.0 } else { row[k as usize] };
            acc += at(j) * (1.0 - f) + at(j + 1) * f;
        }
        acc * scale
    });
    if !out.all_finite() {
        return Err(Error::NonFinite("fbp output".into()));
    }
    Ok(out)
}
