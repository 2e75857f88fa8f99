//! Ellipse-based pelvis-like anatomy shared by the CT and MR channels.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::grid::{Grid, Mask};
use crate::phantom::spec::PhantomSpec;
use crate::rng;
use crate::slice::{Domain, MultimodalSlice};

pub const ROI_IMPLANT_SIDE: &str = "implant_side";
pub const ROI_CONTRALATERAL: &str = "contralateral";

const STREAM_GEOMETRY: u64 = 1;
const STREAM_NOISE_CT: u64 = 2;
const STREAM_NOISE_MR: u64 = 3;
const STREAM_IMPLANT: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    pub fn mask(&self, n: usize) -> Mask {
        Grid::from_fn(n, n, |x, y| self.contains(x as f64, y as f64))
    }
}

/// Geometry of one anatomy draw. Index 0 of `muscles`/`bones` is the left side.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub body: Ellipse,
    pub organs: Vec<Ellipse>,
    pub muscles: [Ellipse; 2],
    pub bones: [Ellipse; 2],
    /// Side (0 left, 1 right) that receives the implant in corrupted draws.
    pub implant_side: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Anatomy {
    pub slice: MultimodalSlice,
    pub labels: Grid<u8>,
    pub roi_masks: Vec<(String, Mask)>,
    pub layout: Layout,
}

/// Implant placement for a corrupted draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Implant {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Implant {
    pub fn mask(&self, n: usize) -> Mask {
        Grid::from_fn(n, n, |x, y| {
            let dx = x as f64 - self.cx;
            let dy = y as f64 - self.cy;
            dx * dx + dy * dy <= self.radius * self.radius
        })
    }
}

fn uniform(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

fn draw_layout(spec: &PhantomSpec, sample_seed: u64) -> Layout {
    let n = spec.image_size as f64;
    let mut r = rng::rng(rng::derive(spec.seed, sample_seed), STREAM_GEOMETRY);
    let c = (n - 1.0) / 2.0;
    let body = Ellipse {
        cx: c + uniform(&mut r, -0.03, 0.03) * n,
        cy: c + uniform(&mut r, -0.03, 0.03) * n,
        a: uniform(&mut r, 0.40, 0.45) * n,
        b: uniform(&mut r, 0.27, 0.33) * n,
        angle: uniform(&mut r, -0.08, 0.08),
    };
    let mut muscles = [body; 2];
    let mut bones = [body; 2];
    for side in 0..2 {
        let sign = if side == 0 { -1.0 } else { 1.0 };
        let m = Ellipse {
            cx: body.cx + sign * uniform(&mut r, 0.18, 0.22) * n,
            cy: body.cy + uniform(&mut r, -0.03, 0.05) * n,
            a: uniform(&mut r, 0.16, 0.175) * n,
            b: uniform(&mut r, 0.13, 0.145) * n,
            angle: uniform(&mut r, -0.35, 0.35),
        };
        let b = Ellipse {
            cx: m.cx + uniform(&mut r, -0.015, 0.015) * n,
            cy: m.cy + uniform(&mut r, -0.015, 0.015) * n,
            a: uniform(&mut r, 0.055, 0.065) * n,
            b: uniform(&mut r, 0.05, 0.06) * n,
            angle: uniform(&mut r, 0.0, core::f64::consts::PI),
        };
        muscles[side] = m;
        bones[side] = b;
    }
    let organs = (4..spec.n_tissues.max(4))
        .map(|_| Ellipse {
            cx: body.cx + uniform(&mut r, -0.08, 0.08) * n,
            cy: body.cy + uniform(&mut r, -0.2, -0.08) * n,
            a: uniform(&mut r, 0.04, 0.07) * n,
            b: uniform(&mut r, 0.03, 0.06) * n,
            angle: uniform(&mut r, 0.0, core::f64::consts::PI),
        })
        .collect();
    let implant_side = if r.random::<bool>() { 1 } else { 0 };
    Layout {
        body,
        organs,
        muscles,
        bones,
        implant_side,
    }
}

fn render_labels(spec: &PhantomSpec, layout: &Layout) -> Grid<u8> {
    let n = spec.image_size;
    let nt = spec.n_tissues;
    Grid::from_fn(n, n, |x, y| {
        let (px, py) = (x as f64, y as f64);
        let mut label = 0u8;
        if nt >= 2 && layout.body.contains(px, py) {
            label = 1;
        }
        for (k, o) in layout.organs.iter().enumerate() {
            if o.contains(px, py) {
                label = (4 + k) as u8;
            }
        }
        for side in 0..2 {
            if nt >= 3 && layout.muscles[side].contains(px, py) {
                label = 2;
            }
            if nt >= 4 && layout.bones[side].contains(px, py) {
                label = 3;
            }
        }
        label
    })
}

fn add_noise(img: &mut Grid<f64>, std: f64, seed: u64, stream: u64) {
    if std > 0.0 {
        let mut r = rng::rng(seed, stream);
        for v in img.as_mut_slice() {
            let z: f64 = r.sample(StandardNormal);
            *v += std * z;
        }
    }
    for v in img.as_mut_slice() {
        *v = v.clamp(-1.0, 1.0);
    }
}

/// Muscle-analog ROIs: each muscle ellipse minus the dilated bone, eroded.
/// The margin is one pixel per 64 pixels of image size.
fn roi_masks(n: usize, layout: &Layout) -> Result<Vec<(String, Mask)>> {
    let names = if layout.implant_side == 0 {
        [ROI_IMPLANT_SIDE, ROI_CONTRALATERAL]
    } else {
        [ROI_CONTRALATERAL, ROI_IMPLANT_SIDE]
    };
    let margin = n / 64;
    let mut rois: Vec<(String, Mask)> = Vec::with_capacity(2);
    for side in 0..2 {
        let m = layout.muscles[side].mask(n);
        let b = layout.bones[side].mask(n).dilate(margin);
        rois.push((names[side].into(), m.and_not(&b)?.erode(margin)));
    }
    // implant side first
    rois.sort_by_key(|(name, _)| name.as_str() != ROI_IMPLANT_SIDE);
    Ok(rois)
}

/// Clean anatomy for `(spec, sample_seed)`: both channels render the same
/// label map with modality-specific intensities and independent noise.
pub fn make_anatomy(spec: &PhantomSpec, sample_seed: u64) -> Result<Anatomy> {
    spec.validate()?;
    let n = spec.image_size;
    let layout = draw_layout(spec, sample_seed);
    let labels = render_labels(spec, &layout);
    let seed = rng::derive(spec.seed, sample_seed);
    let mut ct = labels.map(|l| spec.tissue_intensity_ct[*l as usize]);
    let mut mr = labels.map(|l| spec.tissue_intensity_mr[*l as usize]);
    add_noise(&mut ct, spec.noise_std[0], seed, STREAM_NOISE_CT);
    add_noise(&mut mr, spec.noise_std[1], seed, STREAM_NOISE_MR);
    let roi_masks = roi_masks(n, &layout)?;
    Ok(Anatomy {
        slice: MultimodalSlice::new(Domain::Clean, ct, mr)?,
        labels,
        roi_masks,
        layout,
    })
}

/// Implant centred in the bone on the layout's implant side.
pub fn place_implant(spec: &PhantomSpec, sample_seed: u64, layout: &Layout) -> Implant {
    let mut r = rng::rng(rng::derive(spec.seed, sample_seed), STREAM_IMPLANT);
    let (lo, hi) = spec.implant_radius_range;
    let bone = layout.bones[layout.implant_side];
    Implant {
        cx: bone.cx + uniform(&mut r, -0.5, 0.5),
        cy: bone.cy + uniform(&mut r, -0.5, 0.5),
        radius: uniform(&mut r, lo, hi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_class_without_noise_is_constant() {
        let spec = PhantomSpec {
            n_tissues: 1,
            tissue_intensity_ct: vec![0.25],
            tissue_intensity_mr: vec![-0.4],
            noise_std: [0.0, 0.0],
            ..PhantomSpec::default()
        };
        let a = make_anatomy(&spec, 3).unwrap();
        assert!(a.slice.ct().unwrap().iter().all(|v| *v == 0.25));
        assert!(a.slice.mr().unwrap().iter().all(|v| *v == -0.4));
        assert!(a.labels.iter().all(|l| *l == 0));
    }

    #[test]
    fn deterministic() {
        let spec = PhantomSpec::default();
        assert_eq!(make_anatomy(&spec, 11).unwrap(), make_anatomy(&spec, 11).unwrap());
        assert_ne!(make_anatomy(&spec, 11).unwrap(), make_anatomy(&spec, 12).unwrap());
    }

    #[test]
    fn channels_share_geometry() {
        let spec = PhantomSpec { noise_std: [0.0, 0.0], ..PhantomSpec::default() };
        let a = make_anatomy(&spec, 5).unwrap();
        let ct = a.slice.ct().unwrap();
        let mr = a.slice.mr().unwrap();
        for (i, l) in a.labels.iter().enumerate() {
            assert_eq!(ct.as_slice()[i], spec.tissue_intensity_ct[*l as usize]);
            assert_eq!(mr.as_slice()[i], spec.tissue_intensity_mr[*l as usize]);
        }
    }

    #[test]
    fn rois_are_large_enough_over_many_seeds() {
        for size in [32, 64, 128] {
            let spec = PhantomSpec { image_size: size, ..PhantomSpec::default() };
            for s in 0..40 {
                let a = make_anatomy(&spec, s).unwrap();
                assert_eq!(a.roi_masks.len(), 2);
                assert_eq!(a.roi_masks[0].0, ROI_IMPLANT_SIDE);
                for (name, m) in &a.roi_masks {
                    assert!(m.count() >= 50, "{size} {s} {name} {}", m.count());
                }
            }
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = PhantomSpec { image_size: 40, ..PhantomSpec::default() };
        assert!(make_anatomy(&spec, 0).is_err());
    }
}
