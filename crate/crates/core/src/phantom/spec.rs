use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Parameters of the synthetic CT/MR phantom generator.
///
/// Intensities are in normalised units: each modality maps to `[-1, 1]`, with
/// class 0 as the background (air). Radii are in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub image_size: usize,
    pub n_tissues: usize,
    pub tissue_intensity_ct: Vec<f64>,
    pub tissue_intensity_mr: Vec<f64>,
    pub implant_radius_range: (f64, f64),
    pub ct_severity: f64,
    pub mr_void_radius_factor: f64,
    /// Additive Gaussian noise std for `[CT, MR]`.
    pub noise_std: [f64; 2],
    pub seed: u64,
    /// CT value painted on the implant before projection; above the tissue range.
    pub metal_intensity_ct: f64,
    pub n_angles: usize,
    pub fbp_hann: bool,
    /// Thin bright rim at the MR void boundary.
    pub mr_pileup_ring: bool,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            n_tissues: 4,
            // background, fat, muscle, bone
            tissue_intensity_ct: vec![-1.0, -0.35, 0.1, 0.7],
            tissue_intensity_mr: vec![-1.0, 0.7, -0.2, 0.3],
            implant_radius_range: (2.0, 4.0),
            ct_severity: 1.0,
            mr_void_radius_factor: 1.8,
            noise_std: [0.02, 0.02],
            seed: 0,
            metal_intensity_ct: 3.0,
            n_angles: 180,
            fbp_hann: false,
            mr_pileup_ring: false,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.image_size < 32 || !self.image_size.is_power_of_two() {
            return bad(format!(
                "image_size must be a power of two >= 32, got {}",
                self.image_size
            ));
        }
        if self.n_tissues == 0 || self.n_tissues > 255 {
            return bad(format!("n_tissues must be in 1..=255, got {}", self.n_tissues));
        }
        for (name, values) in [
            ("tissue_intensity_ct", &self.tissue_intensity_ct),
            ("tissue_intensity_mr", &self.tissue_intensity_mr),
        ] {
            if values.len() != self.n_tissues {
                return bad(format!(
                    "{name} has {} entries for {} tissues",
                    values.len(),
                    self.n_tissues
                ));
            }
            if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return bad(format!("{name} entries must lie in [-1, 1]"));
            }
        }
        let (lo, hi) = self.implant_radius_range;
        if !(lo >= 2.0 && hi >= lo && hi < self.image_size as f64 / 4.0) {
            return bad(format!(
                "implant_radius_range ({lo}, {hi}) must satisfy 2 <= min <= max < image_size/4"
            ));
        }
        if !(self.ct_severity >= 0.0 && self.ct_severity.is_finite()) {
            return bad(format!("ct_severity must be >= 0, got {}", self.ct_severity));
        }
        if !(self.mr_void_radius_factor > 1.0 && self.mr_void_radius_factor.is_finite()) {
            return bad(format!(
                "mr_void_radius_factor must be > 1, got {}",
                self.mr_void_radius_factor
            ));
        }
        if self.noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise_std entries must be >= 0".into());
        }
        let ct_max = self
            .tissue_intensity_ct
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if !(self.metal_intensity_ct > ct_max && self.metal_intensity_ct.is_finite()) {
            return bad(format!(
                "metal_intensity_ct ({}) must exceed every tissue CT intensity",
                self.metal_intensity_ct
            ));
        }
        if self.n_angles == 0 {
            return bad("n_angles must be >= 1".into());
        }
        Ok(())
    }

    /// Smallest detector count covering the image diagonal, plus a margin.
    pub fn n_detectors(&self) -> usize {
        crate::phantom::radon::min_detectors(self.image_size) + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        PhantomSpec::default().validate().unwrap();
    }

    #[test]
    fn rejects_violations() {
        let base = PhantomSpec::default();
        let cases = [
            PhantomSpec { image_size: 48, ..base.clone() },
            PhantomSpec { image_size: 16, ..base.clone() },
            PhantomSpec { implant_radius_range: (1.0, 3.0), ..base.clone() },
            PhantomSpec { implant_radius_range: (2.0, 16.0), ..base.clone() },
            PhantomSpec { tissue_intensity_ct: vec![-1.0, 0.0, 0.2, 1.5], ..base.clone() },
            PhantomSpec { tissue_intensity_mr: vec![-1.0, 0.0], ..base.clone() },
            PhantomSpec { mr_void_radius_factor: 1.0, ..base.clone() },
            PhantomSpec { ct_severity: -0.1, ..base.clone() },
            PhantomSpec { metal_intensity_ct: 0.5, ..base.clone() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
