//! Metal corruption of each modality.
//!
//! CT: the implant is painted into the attenuation map, rays crossing the
//! metal trace are saturated and perturbed with multiplicative noise, and the
//! image is reconstructed by filtered back-projection. MR: a smooth signal void
//! centred on the implant drives intensities to the background value.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::phantom::radon::{fbp, radon, RampFilter};
use crate::phantom::spec::PhantomSpec;
use crate::rng;

/// Multiplicative trace-noise std per unit of CT severity.
pub const TRACE_NOISE_PER_SEVERITY: f64 = 0.5;
/// Percentile at which metal-trace line integrals saturate.
pub const TRACE_SATURATION_PERCENTILE: f64 = 0.99;
/// Width of the raised-cosine void edge, as a fraction of the void radius.
pub const VOID_FALLOFF_FRACTION: f64 = 0.25;
pub const PILEUP_AMPLITUDE: f64 = 0.6;

const STREAM_TRACE_NOISE: u64 = 11;

/// Normalised background (air) value of both modalities.
pub const BACKGROUND: f64 = -1.0;

fn fingerprint(img: &Grid<f64>, mask: &Mask) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for (v, m) in img.iter().zip(mask.iter()) {
        h ^= v.to_bits() ^ (*m as u64);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Centroid and equivalent-disc radius of a nonempty mask.
pub fn mask_disc(mask: &Mask) -> Result<(f64, f64, f64)> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut count = 0usize;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask[(x, y)] {
                sx += x as f64;
                sy += y as f64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty("metal mask".into()));
    }
    let n = count as f64;
    Ok((sx / n, sy / n, (n / core::f64::consts::PI).sqrt()))
}

fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    values[idx]
}

/// Streak-corrupted CT reconstruction of `clean_ct` with metal on `metal_mask`.
///
/// The trace-noise realisation depends on the inputs and `spec.seed` but not on
/// `ct_severity`, so outputs at different severities share one streak pattern.
pub fn corrupt_ct(clean_ct: &Grid<f64>, metal_mask: &Mask, spec: &PhantomSpec) -> Result<Grid<f64>> {
    clean_ct.check_same_shape(metal_mask, "metal mask")?;
    if !metal_mask.any() {
        return Err(Error::Empty("metal mask".into()));
    }
    let n = clean_ct.width();
    let n_det = spec.n_detectors().max(crate::phantom::radon::min_detectors(n));
    // attenuation is non-negative: shift so that air maps to zero
    let attenuation = clean_ct.zip_map(metal_mask, |v, m| {
        if *m {
            spec.metal_intensity_ct - BACKGROUND
        } else {
            v - BACKGROUND
        }
    })?;
    let mut sino = radon(&attenuation, spec.n_angles, n_det)?;
    if spec.ct_severity > 0.0 {
        let metal = metal_mask.map(|m| if *m { 1.0 } else { 0.0 });
        let trace = radon(&metal, spec.n_angles, n_det)?;
        let in_trace: Vec<bool> = trace.values().iter().map(|v| *v > 1e-9).collect();
        let mut trace_values: Vec<f64> = sino
            .values()
            .iter()
            .zip(&in_trace)
            .filter_map(|(v, t)| t.then_some(*v))
            .collect();
        let cap = percentile(&mut trace_values, TRACE_SATURATION_PERCENTILE);
        let mut r = rng::rng(spec.seed ^ fingerprint(clean_ct, metal_mask), STREAM_TRACE_NOISE);
        let noise_std = TRACE_NOISE_PER_SEVERITY * spec.ct_severity;
        // one gain error per view: the whole trace of an angle is mis-measured
        // coherently, which back-projects into streaks along that view
        let n_det = sino.n_detectors();
        for (a, row) in sino.values_mut().chunks_mut(n_det).enumerate() {
            let z: f64 = r.sample(StandardNormal);
            for (v, t) in row.iter_mut().zip(&in_trace[a * n_det..(a + 1) * n_det]) {
                if *t {
                    *v = v.min(cap) * (1.0 + noise_std * z);
                }
            }
        }
    }
    let filter = if spec.fbp_hann { RampFilter::Hann } else { RampFilter::RamLak };
    let recon = fbp(&sino, n, filter)?;
    Ok(recon.map(|v| (v + BACKGROUND).clamp(-1.0, 1.0)))
}

/// Multiplicative MR signal field around an implant: 0 inside the void radius,
/// raised-cosine rise to 1 over the falloff band.
pub fn void_attenuation(n: usize, cx: f64, cy: f64, void_radius: f64) -> Grid<f64> {
    let width = VOID_FALLOFF_FRACTION * void_radius;
    Grid::from_fn(n, n, |x, y| {
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        if d <= void_radius {
            0.0
        } else if d >= void_radius + width {
            1.0
        } else {
            0.5 * (1.0 - (core::f64::consts::PI * (d - void_radius) / width).cos())
        }
    })
}

/// Pixels whose MR signal is at least halved by the void.
pub fn void_mask(metal_mask: &Mask, spec: &PhantomSpec) -> Result<Mask> {
    let (cx, cy, r) = mask_disc(metal_mask)?;
    let att = void_attenuation(metal_mask.width(), cx, cy, r * spec.mr_void_radius_factor);
    Ok(att.map(|a| *a < 0.5))
}

/// Susceptibility-void corruption of `clean_mr` around the implant on `metal_mask`.
pub fn corrupt_mr(clean_mr: &Grid<f64>, metal_mask: &Mask, spec: &PhantomSpec) -> Result<Grid<f64>> {
    clean_mr.check_same_shape(metal_mask, "metal mask")?;
    let (cx, cy, r) = mask_disc(metal_mask)?;
    let void_radius = r * spec.mr_void_radius_factor;
    let width = VOID_FALLOFF_FRACTION * void_radius;
    let att = void_attenuation(clean_mr.width(), cx, cy, void_radius);
    let mut out = clean_mr.zip_map(&att, |v, a| BACKGROUND + a * (v - BACKGROUND))?;
    if spec.mr_pileup_ring {
        for y in 0..out.height() {
            for x in 0..out.width() {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let u = (d - void_radius) / width;
                if (0.0..=1.0).contains(&u) {
                    out[(x, y)] += PILEUP_AMPLITUDE * (core::f64::consts::PI * u).sin().powi(2);
                }
            }
        }
    }
    Ok(out.map(|v| v.clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::anatomy::{make_anatomy, place_implant};
    use crate::metrics::population_std;

    fn setup(size: usize) -> (PhantomSpec, Grid<f64>, Grid<f64>, Mask, Vec<(alloc::string::String, Mask)>) {
        let spec = PhantomSpec { image_size: size, ..PhantomSpec::default() };
        let a = make_anatomy(&spec, 0).unwrap();
        let imp = place_implant(&spec, 0, &a.layout);
        let metal = imp.mask(size);
        (
            spec,
            a.slice.ct().unwrap().clone(),
            a.slice.mr().unwrap().clone(),
            metal,
            a.roi_masks,
        )
    }

    #[test]
    fn empty_mask_rejected() {
        let (spec, ct, mr, metal, _) = setup(64);
        let empty = metal.map(|_| false);
        assert!(corrupt_ct(&ct, &empty, &spec).is_err());
        assert!(corrupt_mr(&mr, &empty, &spec).is_err());
    }

    #[test]
    fn mr_far_field_unchanged_and_center_void() {
        let (spec, _, mr, metal, _) = setup(64);
        let out = corrupt_mr(&mr, &metal, &spec).unwrap();
        let (cx, cy, r) = mask_disc(&metal).unwrap();
        let vr = r * spec.mr_void_radius_factor;
        for y in 0..64 {
            for x in 0..64 {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d > 2.0 * vr {
                    assert!((out[(x, y)] - mr[(x, y)]).abs() < 1e-6);
                }
            }
        }
        let (ix, iy) = (cx.round() as usize, cy.round() as usize);
        assert!((out[(ix, iy)] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn mr_corruption_is_local() {
        let (spec, _, mr, metal, _) = setup(64);
        let out = corrupt_mr(&mr, &metal, &spec).unwrap();
        let void = void_mask(&metal, &spec).unwrap();
        let mut inside = (0.0, 0usize);
        let mut outside = (0.0, 0usize);
        for i in 0..out.len() {
            let d = (out.as_slice()[i] - mr.as_slice()[i]).abs();
            if void.as_slice()[i] {
                inside.0 += d;
                inside.1 += 1;
            } else {
                outside.0 += d;
                outside.1 += 1;
            }
        }
        let mi = inside.0 / inside.1 as f64;
        let mo = outside.0 / outside.1 as f64;
        assert!(mi >= 10.0 * mo, "{mi} vs {mo}");
    }

    #[test]
    fn mr_pileup_ring_brightens_the_edge() {
        let (spec, _, mr, metal, _) = setup(64);
        let plain = corrupt_mr(&mr, &metal, &spec).unwrap();
        let ring = corrupt_mr(&mr, &metal, &PhantomSpec { mr_pileup_ring: true, ..spec }).unwrap();
        let gain: f64 = ring.iter().zip(plain.iter()).map(|(a, b)| a - b).sum();
        assert!(gain > 0.0);
        assert!(ring.iter().zip(plain.iter()).all(|(a, b)| a >= b));
    }

    #[test]
    fn ct_corruption_deterministic_and_monotone() {
        let (spec, ct, _, metal, rois) = setup(128);
        let mut last = -1.0;
        for s in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let sp = PhantomSpec { ct_severity: s, ..spec.clone() };
            let a = corrupt_ct(&ct, &metal, &sp).unwrap();
            let b = corrupt_ct(&ct, &metal, &sp).unwrap();
            assert_eq!(a, b);
            let roi = rois[0].1.and_not(&metal.dilate(1)).unwrap();
            let sd = population_std(&a.masked_values(&roi).unwrap());
            assert!(sd >= last, "severity {s}: {sd} < {last}");
            last = sd;
        }
    }

    /// Within-class variance over pixels of `region`, pooled across tissue classes.
    fn pooled_class_variance(img: &Grid<f64>, labels: &Grid<u8>, region: &Mask) -> f64 {
        let (mut ss, mut n) = (0.0, 0usize);
        for class in 0..=u8::MAX {
            let vals: Vec<f64> = (0..img.len())
                .filter(|&i| region.as_slice()[i] && labels.as_slice()[i] == class)
                .map(|i| img.as_slice()[i])
                .collect();
            if vals.len() > 1 {
                ss += population_std(&vals).powi(2) * vals.len() as f64;
                n += vals.len();
            }
        }
        ss / n as f64
    }

    #[test]
    fn ct_streaks_raise_variance_away_from_metal() {
        let spec = PhantomSpec::default();
        for seed in 0..5 {
            let a = make_anatomy(&spec, seed).unwrap();
            let metal = place_implant(&spec, seed, &a.layout).mask(spec.image_size);
            let ct = a.slice.ct().unwrap();
            let far = metal.dilate(6).not();
            let clean_var = pooled_class_variance(ct, &a.labels, &far);
            let out = corrupt_ct(ct, &metal, &spec).unwrap();
            let var = pooled_class_variance(&out, &a.labels, &far);
            assert!(var > clean_var, "seed {seed}: {var} <= {clean_var}");
            let zero = corrupt_ct(ct, &metal, &PhantomSpec { ct_severity: 0.0, ..spec.clone() }).unwrap();
            assert!(pooled_class_variance(&zero, &a.labels, &far) < var);
        }
    }
}
