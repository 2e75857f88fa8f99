//! Loss terms of the disentanglement objective and their weighted total.
//!
//! Every term returns its value together with the gradient with respect to
//! each image (or logit grid) it reads. Expectations are plain means over
//! batch, channels and pixels; the two-norm sums in reconstruction and cycle
//! terms are sums of per-term means.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lncc::{sim_loss_grad, LnccConfig};
use crate::model::Mode;

/// NCHW batch of f64 images or logit grids.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl ImageBatch {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], v: f64) -> Self {
        Self {
            shape,
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self, n: usize, c: usize) -> Grid<f64> {
        let [_, ch, h, w] = self.shape;
        let off = (n * ch + c) * h * w;
        Grid::from_vec(w, h, self.data[off..off + h * w].to_vec()).expect("plane shape")
    }

    fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let [_, ch, h, w] = self.shape;
        let off = (n * ch + c) * h * w;
        &mut self.data[off..off + h * w]
    }

    fn check_same(&self, other: &ImageBatch, what: &str) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{what}: {:?} vs {:?}", self.shape, other.shape)))
        }
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.into()))
        }
    }
}

/// Which side of the adversarial game a loss is evaluated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvSide {
    Discriminator,
    Generator,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy adversarial loss on logits, with gradients for the
/// real and fake logit grids. The generator side is non-saturating and does
/// not read the real scores.
pub fn adv_loss(
    real: Option<&ImageBatch>,
    fake: &ImageBatch,
    side: AdvSide,
) -> Result<(f64, Option<Vec<f64>>, Vec<f64>)> {
    fake.check_finite("fake scores")?;
    let nf = fake.len() as f64;
    match side {
        AdvSide::Generator => {
            let value = fake.data.iter().map(|z| softplus(-z)).sum::<f64>() / nf;
            let grad = fake.data.iter().map(|z| (sigmoid(*z) - 1.0) / nf).collect();
            Ok((value, None, grad))
        }
        AdvSide::Discriminator => {
            let real = real.ok_or_else(|| Error::Empty("real scores".into()))?;
            real.check_finite("real scores")?;
            let nr = real.len() as f64;
            let value = real.data.iter().map(|z| softplus(-z)).sum::<f64>() / nr
                + fake.data.iter().map(|z| softplus(*z)).sum::<f64>() / nf;
            let g_real = real.data.iter().map(|z| (sigmoid(*z) - 1.0) / nr).collect();
            let g_fake = fake.data.iter().map(|z| sigmoid(*z) / nf).collect();
            Ok((value, Some(g_real), g_fake))
        }
    }
}

/// Mean absolute difference and its gradient with respect to `a`
/// (the gradient with respect to `b` is the negation).
pub fn l1_mean(a: &ImageBatch, b: &ImageBatch) -> Result<(f64, Vec<f64>)> {
    a.check_same(b, "l1")?;
    let n = a.len() as f64;
    let mut value = 0.0;
    let grad = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x - y;
            value += d.abs();
            sign(d) / n
        })
        .collect();
    Ok((value / n, grad))
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Images and discriminator scores of one forward pass.
///
/// `cycle_rec_clean` is `G_clean(E_corrupted(ŷᵃ))`; `cycle_rec_corrupted` is
/// `G_corrupted(E_clean(x̂), a)` and is only produced for the full cycle.
/// `d_fake_clean` / `d_fake_corrupted` are discriminator logits on `x̂` / `ŷᵃ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutputs {
    pub x_a: ImageBatch,
    pub y: ImageBatch,
    pub x_hat: ImageBatch,
    pub x_hat_a: ImageBatch,
    pub y_hat: ImageBatch,
    pub y_hat_a: ImageBatch,
    pub cycle_rec_clean: ImageBatch,
    pub cycle_rec_corrupted: Option<ImageBatch>,
    pub d_fake_clean: Option<ImageBatch>,
    pub d_fake_corrupted: Option<ImageBatch>,
}

impl PathOutputs {
    fn check_shapes(&self) -> Result<()> {
        let s = &self.x_a;
        for (name, b) in [
            ("y", &self.y),
            ("x_hat", &self.x_hat),
            ("x_hat_a", &self.x_hat_a),
            ("y_hat", &self.y_hat),
            ("y_hat_a", &self.y_hat_a),
            ("cycle_rec_clean", &self.cycle_rec_clean),
        ] {
            s.check_same(b, name)?;
        }
        if let Some(c) = &self.cycle_rec_corrupted {
            s.check_same(c, "cycle_rec_corrupted")?;
        }
        Ok(())
    }
}

/// Gradient of a scalar with respect to every field of [`PathOutputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathGrads {
    pub x_hat: Vec<f64>,
    pub x_hat_a: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub y_hat_a: Vec<f64>,
    pub cycle_rec_clean: Vec<f64>,
    pub cycle_rec_corrupted: Option<Vec<f64>>,
    pub d_fake_clean: Option<Vec<f64>>,
    pub d_fake_corrupted: Option<Vec<f64>>,
}

impl PathGrads {
    fn zeros_like(p: &PathOutputs) -> Self {
        let n = p.x_a.len();
        Self {
            x_hat: vec![0.0; n],
            x_hat_a: vec![0.0; n],
            y_hat: vec![0.0; n],
            y_hat_a: vec![0.0; n],
            cycle_rec_clean: vec![0.0; n],
            cycle_rec_corrupted: p.cycle_rec_corrupted.as_ref().map(|_| vec![0.0; n]),
            d_fake_clean: p.d_fake_clean.as_ref().map(|d| vec![0.0; d.len()]),
            d_fake_corrupted: p.d_fake_corrupted.as_ref().map(|d| vec![0.0; d.len()]),
        }
    }
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// `mean|x̂ᵃ − xᵃ| + mean|ŷ − y|`.
pub fn rec_loss(p: &PathOutputs) -> Result<f64> {
    Ok(l1_mean(&p.x_hat_a, &p.x_a)?.0 + l1_mean(&p.y_hat, &p.y)?.0)
}

fn rec_loss_grad(p: &PathOutputs, scale: f64, g: &mut PathGrads) -> Result<f64> {
    let (v1, g1) = l1_mean(&p.x_hat_a, &p.x_a)?;
    let (v2, g2) = l1_mean(&p.y_hat, &p.y)?;
    axpy(&mut g.x_hat_a, scale, &g1);
    axpy(&mut g.y_hat, scale, &g2);
    Ok(v1 + v2)
}

fn art_residual(p: &PathOutputs) -> Result<(ImageBatch, ImageBatch)> {
    p.x_a.check_same(&p.x_hat, "art")?;
    p.y_hat_a.check_same(&p.y, "art")?;
    let removed = ImageBatch {
        shape: p.x_a.shape,
        data: p.x_a.data.iter().zip(&p.x_hat.data).map(|(a, b)| a - b).collect(),
    };
    let added = ImageBatch {
        shape: p.x_a.shape,
        data: p.y_hat_a.data.iter().zip(&p.y.data).map(|(a, b)| a - b).collect(),
    };
    Ok((removed, added))
}

/// `mean|(xᵃ − x̂) − (ŷᵃ − y)|`.
pub fn art_loss(p: &PathOutputs) -> Result<f64> {
    let (removed, added) = art_residual(p)?;
    Ok(l1_mean(&removed, &added)?.0)
}

fn art_loss_grad(p: &PathOutputs, scale: f64, g: &mut PathGrads) -> Result<f64> {
    let (removed, added) = art_residual(p)?;
    let (v, gr) = l1_mean(&removed, &added)?;
    // d/dx̂ = -d/d(removed); d/dŷᵃ = -d/d(removed)
    axpy(&mut g.x_hat, -scale, &gr);
    axpy(&mut g.y_hat_a, -scale, &gr);
    Ok(v)
}

/// Self-reduction term `mean|G_clean(E_corrupted(ŷᵃ)) − y|`.
pub fn sr_loss(p: &PathOutputs) -> Result<f64> {
    Ok(l1_mean(&p.cycle_rec_clean, &p.y)?.0)
}

/// Full cycle: self-reduction plus `mean|G_corrupted(E_clean(x̂), a) − xᵃ|`.
pub fn cycle_loss(p: &PathOutputs) -> Result<f64> {
    let cc = p
        .cycle_rec_corrupted
        .as_ref()
        .ok_or_else(|| Error::Empty("cycle_rec_corrupted".into()))?;
    Ok(sr_loss(p)? + l1_mean(cc, &p.x_a)?.0)
}

fn cycle_loss_grad(p: &PathOutputs, scale: f64, g: &mut PathGrads, full: bool) -> Result<f64> {
    let (v1, g1) = l1_mean(&p.cycle_rec_clean, &p.y)?;
    axpy(&mut g.cycle_rec_clean, scale, &g1);
    if !full {
        return Ok(v1);
    }
    let cc = p
        .cycle_rec_corrupted
        .as_ref()
        .ok_or_else(|| Error::Empty("cycle_rec_corrupted".into()))?;
    let (v2, g2) = l1_mean(cc, &p.x_a)?;
    axpy(g.cycle_rec_corrupted.as_mut().expect("allocated with outputs"), scale, &g2);
    Ok(v1 + v2)
}

/// Batch mean of `1 − mean|LNCC(x_CT, x_MR)|` over two-channel `[CT, MR]`
/// images, with the gradient in NCHW layout.
pub fn batch_sim_loss(x: &ImageBatch, cfg: &LnccConfig) -> Result<(f64, Vec<f64>)> {
    let [n, c, _, _] = x.shape;
    if c != 2 {
        return Err(Error::ChannelMismatch { expected: 2, got: c });
    }
    let mut grad = ImageBatch::zeros(x.shape);
    let mut total = 0.0;
    for i in 0..n {
        let (v, ga, gb) = sim_loss_grad(&x.plane(i, 0), &x.plane(i, 1), cfg)?;
        total += v;
        for (d, s) in grad.plane_mut(i, 0).iter_mut().zip(ga.iter()) {
            *d = s / n as f64;
        }
        for (d, s) in grad.plane_mut(i, 1).iter_mut().zip(gb.iter()) {
            *d = s / n as f64;
        }
    }
    Ok((total / n as f64, grad.data))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_adv_clean: f64,
    pub lambda_adv_corrupted: f64,
    pub lambda_rec: f64,
    /// Weight of the full cycle term; also used for the self-reduction term
    /// when a mode trains without the full cycle.
    pub lambda_cycle: f64,
    pub lambda_art: f64,
    pub lambda_sim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_adv_clean: 1.0,
            lambda_adv_corrupted: 1.0,
            lambda_rec: 20.0,
            lambda_cycle: 20.0,
            lambda_art: 20.0,
            lambda_sim: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_adv_clean", self.lambda_adv_clean),
            ("lambda_adv_corrupted", self.lambda_adv_corrupted),
            ("lambda_rec", self.lambda_rec),
            ("lambda_cycle", self.lambda_cycle),
            ("lambda_art", self.lambda_art),
            ("lambda_sim", self.lambda_sim),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::NegativeWeight(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Unweighted term values. `cycle` holds the self-reduction term alone for
/// modes without the full cycle; `sim` is `None` when the mode excludes it.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossTerms {
    pub adv_clean: f64,
    pub adv_corrupted: f64,
    pub rec: f64,
    pub cycle: f64,
    pub art: f64,
    pub sim: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossBreakdown {
    pub terms: LossTerms,
    pub total: f64,
}

/// Weighted sum of the terms a mode trains with.
pub fn assemble_total(terms: &LossTerms, w: &LossWeights, mode: Mode) -> Result<f64> {
    w.validate()?;
    let mut total = w.lambda_adv_clean * terms.adv_clean
        + w.lambda_adv_corrupted * terms.adv_corrupted
        + w.lambda_rec * terms.rec
        + w.lambda_cycle * terms.cycle
        + w.lambda_art * terms.art;
    if mode.uses_similarity() {
        let sim = terms.sim.ok_or_else(|| Error::Empty("similarity term".into()))?;
        total += w.lambda_sim * sim;
    }
    Ok(total)
}

/// Generator-side total loss for `mode` and its gradient with respect to
/// every decoded image and fake score grid.
pub fn total_loss(
    p: &PathOutputs,
    w: &LossWeights,
    mode: Mode,
    lncc: &LnccConfig,
) -> Result<(LossBreakdown, PathGrads)> {
    w.validate()?;
    p.check_shapes()?;
    let mut g = PathGrads::zeros_like(p);
    let mut terms = LossTerms::default();
    if let (Some(d), Some(gd)) = (&p.d_fake_clean, g.d_fake_clean.as_mut()) {
        let (v, _, grad) = adv_loss(None, d, AdvSide::Generator)?;
        axpy(gd, w.lambda_adv_clean, &grad);
        terms.adv_clean = v;
    }
    if let (Some(d), Some(gd)) = (&p.d_fake_corrupted, g.d_fake_corrupted.as_mut()) {
        let (v, _, grad) = adv_loss(None, d, AdvSide::Generator)?;
        axpy(gd, w.lambda_adv_corrupted, &grad);
        terms.adv_corrupted = v;
    }
    terms.rec = rec_loss_grad(p, w.lambda_rec, &mut g)?;
    terms.cycle = cycle_loss_grad(p, w.lambda_cycle, &mut g, mode.uses_full_cycle())?;
    terms.art = art_loss_grad(p, w.lambda_art, &mut g)?;
    if mode.uses_similarity() {
        let (v, grad) = batch_sim_loss(&p.x_hat, lncc)?;
        axpy(&mut g.x_hat, w.lambda_sim, &grad);
        terms.sim = Some(v);
    }
    let total = assemble_total(&terms, w, mode)?;
    Ok((LossBreakdown { terms, total }, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_outputs(v: f64) -> PathOutputs {
        let s = [1, 2, 4, 4];
        let b = ImageBatch::filled(s, v);
        PathOutputs {
            x_a: b.clone(),
            y: b.clone(),
            x_hat: b.clone(),
            x_hat_a: b.clone(),
            y_hat: b.clone(),
            y_hat_a: b.clone(),
            cycle_rec_clean: b.clone(),
            cycle_rec_corrupted: Some(b),
            d_fake_clean: None,
            d_fake_corrupted: None,
        }
    }

    #[test]
    fn chance_level_discriminator_loss() {
        let z = ImageBatch::zeros([2, 1, 3, 3]);
        let (v, _, _) = adv_loss(Some(&z), &z, AdvSide::Discriminator).unwrap();
        assert!((v - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_vanishes_for_confident_fakes() {
        let z = ImageBatch::filled([1, 1, 2, 2], 40.0);
        let (v, _, _) = adv_loss(None, &z, AdvSide::Generator).unwrap();
        assert!(v < 1e-15);
    }

    #[test]
    fn adv_rejects_non_finite() {
        let z = ImageBatch::filled([1, 1, 1, 1], f64::NAN);
        assert!(adv_loss(None, &z, AdvSide::Generator).is_err());
    }

    #[test]
    fn zero_at_fixed_points() {
        let p = constant_outputs(0.3);
        assert_eq!(rec_loss(&p).unwrap(), 0.0);
        assert_eq!(art_loss(&p).unwrap(), 0.0);
        assert_eq!(cycle_loss(&p).unwrap(), 0.0);
    }

    #[test]
    fn constant_offsets() {
        let mut p = constant_outputs(0.0);
        p.y_hat = ImageBatch::filled(p.y.shape, 0.5);
        assert!((rec_loss(&p).unwrap() - 0.5).abs() < 1e-15);

        let mut p = constant_outputs(0.0);
        p.x_hat = ImageBatch::filled(p.y.shape, -0.2); // x_a - x_hat = 0.2
        p.y_hat_a = ImageBatch::filled(p.y.shape, -0.1); // y_hat_a - y = -0.1
        assert!((art_loss(&p).unwrap() - 0.3).abs() < 1e-15);

        let mut p = constant_outputs(0.0);
        p.cycle_rec_clean = ImageBatch::filled(p.y.shape, 0.3);
        assert!((cycle_loss(&p).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn unit_terms_default_weights() {
        let t = LossTerms {
            adv_clean: 1.0,
            adv_corrupted: 1.0,
            rec: 1.0,
            cycle: 1.0,
            art: 1.0,
            sim: Some(1.0),
        };
        let w = LossWeights::default();
        assert_eq!(assemble_total(&t, &w, Mode::Madn).unwrap(), 63.0);
        assert_eq!(assemble_total(&t, &w, Mode::MultichannelAdn).unwrap(), 62.0);
        assert_eq!(assemble_total(&LossTerms { sim: Some(0.0), ..LossTerms::default() }, &w, Mode::Madn).unwrap(), 0.0);
    }

    #[test]
    fn negative_weight_rejected() {
        let w = LossWeights { lambda_art: -1.0, ..LossWeights::default() };
        assert!(matches!(
            assemble_total(&LossTerms::default(), &w, Mode::AdnCt),
            Err(Error::NegativeWeight(_))
        ));
    }
}
