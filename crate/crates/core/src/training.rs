//! One unpaired adversarial update, the deterministic batch schedule, and the
//! inference-time correction and artefact-synthesis paths.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::lncc::LnccConfig;
use crate::losses::{adv_loss, batch_sim_loss, total_loss, AdvSide, ImageBatch, LossBreakdown, LossWeights, PathOutputs};
use crate::model::{CodeKind, LatentCode, ModelBundle, Net};
use crate::nn::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::rng;
use crate::slice::{Domain, MultimodalSlice};

pub const DEFAULT_LEARNING_RATE: f32 = 1e-5;

/// Hyper-parameters of a single update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub learning_rate: f32,
    pub weights: LossWeights,
    pub lncc: LnccConfig,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            weights: LossWeights::default(),
            lncc: LnccConfig::default(),
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        self.weights.validate()?;
        self.lncc.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Losses reported by one [`Trainer::step`].
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StepMetrics {
    pub step: u64,
    /// Discriminator objectives at the start of the step.
    pub d_clean: f64,
    pub d_corrupted: f64,
    /// Encoder/generator objective (adversarial terms against the updated discriminators).
    pub generator: LossBreakdown,
    /// Mean logits of the updated clean-domain discriminator on `y` and `x̂`.
    pub d_real_clean_logit: f64,
    pub d_fake_clean_logit: f64,
}

/// Model, one Adam state per network and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub model: ModelBundle,
    pub optimizers: Vec<Adam>,
    pub step: u64,
    pub config: StepConfig,
}

fn to_batch(t: &Tensor) -> ImageBatch {
    ImageBatch {
        shape: t.shape,
        data: t.to_f64(),
    }
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("non-finite values in {what}")))
    }
}

fn mean(t: &Tensor) -> f64 {
    t.data.iter().map(|v| *v as f64).sum::<f64>() / t.len() as f64
}

/// Variables of the image paths recorded on one tape.
struct Paths {
    c_a: Var,
    a: Var,
    c: Var,
    x_hat: Var,
    x_hat_a: Var,
    y_hat: Var,
    y_hat_a: Var,
    cycle_rec_clean: Var,
    cycle_rec_corrupted: Option<Var>,
}

fn record_paths(m: &ModelBundle, tape: &mut Tape<'_>, x_a: Var, y: Var) -> Paths {
    let c_a = m.forward(tape, Net::EncoderCorrupted, x_a);
    let a = m.forward(tape, Net::EncoderArtefact, x_a);
    let c = m.forward(tape, Net::EncoderClean, y);
    let x_hat = m.forward(tape, Net::GeneratorClean, c_a);
    let x_hat_a = m.decode_corrupted_var(tape, c_a, a);
    let y_hat = m.forward(tape, Net::GeneratorClean, c);
    let y_hat_a = m.decode_corrupted_var(tape, c, a);
    let c_cycle = m.forward(tape, Net::EncoderCorrupted, y_hat_a);
    let cycle_rec_clean = m.forward(tape, Net::GeneratorClean, c_cycle);
    let cycle_rec_corrupted = m.mode().uses_full_cycle().then(|| {
        let c_back = m.forward(tape, Net::EncoderClean, x_hat);
        m.decode_corrupted_var(tape, c_back, a)
    });
    Paths {
        c_a,
        a,
        c,
        x_hat,
        x_hat_a,
        y_hat,
        y_hat_a,
        cycle_rec_clean,
        cycle_rec_corrupted,
    }
}

impl Paths {
    fn check(&self, tape: &Tape<'_>) -> Result<()> {
        let mut named = Vec::from([
            ("c_a", self.c_a),
            ("a", self.a),
            ("c", self.c),
            ("x_hat", self.x_hat),
            ("x_hat_a", self.x_hat_a),
            ("y_hat", self.y_hat),
            ("y_hat_a", self.y_hat_a),
            ("cycle_rec_clean", self.cycle_rec_clean),
        ]);
        if let Some(v) = self.cycle_rec_corrupted {
            named.push(("cycle_rec_corrupted", v));
        }
        for (name, v) in named {
            check_finite(tape.value(v), name)?;
        }
        Ok(())
    }
}

/// Splits a `[real; fake]` batch of logits in half.
fn split_half(t: &Tensor) -> (Tensor, Tensor) {
    let n = t.n() / 2;
    (t.narrow_batch(0, n), t.narrow_batch(n, n))
}

impl Trainer {
    pub fn new(model: ModelBundle, config: StepConfig) -> Result<Self> {
        config.validate()?;
        let optimizers = Net::ALL.iter().map(|n| Adam::new(config.adam(), model.params(*n))).collect();
        Ok(Self {
            model,
            optimizers,
            step: 0,
            config,
        })
    }

    fn check_inputs(&self, x_a: &Tensor, y: &Tensor) -> Result<()> {
        let c = self.model.n_channels();
        for t in [x_a, y] {
            if t.c() != c {
                return Err(Error::ChannelMismatch { expected: c, got: t.c() });
            }
        }
        if x_a.shape != y.shape {
            return Err(Error::ShapeMismatch(format!("corrupted batch {:?} vs clean batch {:?}", x_a.shape, y.shape)));
        }
        check_finite(x_a, "corrupted input batch")?;
        check_finite(y, "clean input batch")
    }

    fn apply(&mut self, nets: &[Net], grads: &[crate::nn::GradSet]) {
        for net in nets {
            let i = net.index();
            let lr = self.config.learning_rate;
            self.optimizers[i].config.lr = lr;
            self.optimizers[i].step(self.model.params_mut(*net), &grads[i]);
        }
    }

    fn check_params(&self, nets: &[Net]) -> Result<()> {
        match nets.iter().find(|n| !self.model.params(**n).all_finite()) {
            Some(n) => Err(Error::NonFinite(format!("parameters of {} after update", n.name()))),
            None => Ok(()),
        }
    }

    /// Discriminator update on detached fakes, then encoder/generator update
    /// on the total loss against the updated (frozen) discriminators.
    pub fn step(&mut self, x_a: &Tensor, y: &Tensor) -> Result<StepMetrics> {
        self.check_inputs(x_a, y)?;
        let m = &self.model;

        // fakes with every network fixed
        let (x_hat, y_hat_a) = {
            let mut tape = m.tape(&[]);
            let xv = tape.input(x_a.clone());
            let yv = tape.input(y.clone());
            let c_a = m.forward(&mut tape, Net::EncoderCorrupted, xv);
            let a = m.forward(&mut tape, Net::EncoderArtefact, xv);
            let c = m.forward(&mut tape, Net::EncoderClean, yv);
            let x_hat = m.forward(&mut tape, Net::GeneratorClean, c_a);
            let y_hat_a = m.decode_corrupted_var(&mut tape, c, a);
            (tape.value(x_hat).clone(), tape.value(y_hat_a).clone())
        };
        check_finite(&x_hat, "x_hat")?;
        check_finite(&y_hat_a, "y_hat_a")?;

        let eg_before = m.fingerprint(&Net::ENCODERS_GENERATORS);
        let (d_clean, d_corrupted, d_grads) = {
            let mut tape = m.tape(&Net::DISCRIMINATORS);
            let clean_in = tape.input(Tensor::cat_batch(&[y, &x_hat]));
            let corr_in = tape.input(Tensor::cat_batch(&[x_a, &y_hat_a]));
            let lc = m.forward(&mut tape, Net::DiscriminatorClean, clean_in);
            let lk = m.forward(&mut tape, Net::DiscriminatorCorrupted, corr_in);
            let mut seeds = Vec::new();
            let mut values = [0.0; 2];
            for (k, (v, what)) in [(lc, "D_clean logits"), (lk, "D_corrupted logits")].into_iter().enumerate() {
                let logits = tape.value(v);
                check_finite(logits, what)?;
                let (real, fake) = split_half(logits);
                let (value, g_real, g_fake) = adv_loss(Some(&to_batch(&real)), &to_batch(&fake), AdvSide::Discriminator)?;
                values[k] = value;
                let mut g = g_real.expect("discriminator side returns real grads");
                g.extend(g_fake);
                seeds.push((v, Tensor::from_f64(logits.shape, &g)));
            }
            let grads = tape.backward(seeds).into_params();
            (values[0], values[1], grads)
        };
        if let Some(n) = Net::DISCRIMINATORS.iter().find(|n| !d_grads[n.index()].all_finite()) {
            return Err(Error::NonFinite(format!("adversarial gradient of {}", n.name())));
        }
        self.apply(&Net::DISCRIMINATORS, &d_grads);
        self.check_params(&Net::DISCRIMINATORS)?;
        debug_assert_eq!(eg_before, self.model.fingerprint(&Net::ENCODERS_GENERATORS));
        if eg_before != self.model.fingerprint(&Net::ENCODERS_GENERATORS) {
            return Err(Error::InvalidConfig("discriminator update touched encoder/generator parameters".into()));
        }

        let m = &self.model;
        let d_before = m.fingerprint(&Net::DISCRIMINATORS);
        let (generator, d_real, d_fake, g_grads) = {
            let mut tape = m.tape(&Net::ENCODERS_GENERATORS);
            let xv = tape.input(x_a.clone());
            let yv = tape.input(y.clone());
            let p = record_paths(m, &mut tape, xv, yv);
            p.check(&tape)?;
            let d_clean_v = m.forward(&mut tape, Net::DiscriminatorClean, p.x_hat);
            let d_corr_v = m.forward(&mut tape, Net::DiscriminatorCorrupted, p.y_hat_a);
            let fake_logits = tape.value(d_clean_v).clone();
            check_finite(tape.value(d_clean_v), "D_clean logits")?;
            check_finite(tape.value(d_corr_v), "D_corrupted logits")?;
            let outputs = PathOutputs {
                x_a: to_batch(x_a),
                y: to_batch(y),
                x_hat: to_batch(tape.value(p.x_hat)),
                x_hat_a: to_batch(tape.value(p.x_hat_a)),
                y_hat: to_batch(tape.value(p.y_hat)),
                y_hat_a: to_batch(tape.value(p.y_hat_a)),
                cycle_rec_clean: to_batch(tape.value(p.cycle_rec_clean)),
                cycle_rec_corrupted: p.cycle_rec_corrupted.map(|v| to_batch(tape.value(v))),
                d_fake_clean: Some(to_batch(&fake_logits)),
                d_fake_corrupted: Some(to_batch(tape.value(d_corr_v))),
            };
            let (breakdown, g) = total_loss(&outputs, &self.config.weights, m.mode(), &self.config.lncc)?;
            check_terms(&breakdown)?;
            let shape = x_a.shape;
            let gd_clean = g.d_fake_clean.expect("fake scores supplied");
            let mut seeds = Vec::from([
                (p.x_hat, Tensor::from_f64(shape, &g.x_hat)),
                (p.x_hat_a, Tensor::from_f64(shape, &g.x_hat_a)),
                (p.y_hat, Tensor::from_f64(shape, &g.y_hat)),
                (p.y_hat_a, Tensor::from_f64(shape, &g.y_hat_a)),
                (p.cycle_rec_clean, Tensor::from_f64(shape, &g.cycle_rec_clean)),
                (d_clean_v, Tensor::from_f64(tape.value(d_clean_v).shape, &gd_clean)),
                (
                    d_corr_v,
                    Tensor::from_f64(tape.value(d_corr_v).shape, &g.d_fake_corrupted.expect("fake scores supplied")),
                ),
            ]);
            if let (Some(v), Some(gc)) = (p.cycle_rec_corrupted, &g.cycle_rec_corrupted) {
                seeds.push((v, Tensor::from_f64(shape, gc)));
            }
            let grads = tape.backward(seeds).into_params();
            let real_logits = m.discriminate(Domain::Clean, y)?;
            (breakdown, mean(&real_logits), mean(&fake_logits), grads)
        };
        if let Some(n) = Net::ENCODERS_GENERATORS.iter().find(|n| !g_grads[n.index()].all_finite()) {
            return Err(Error::NonFinite(format!("total-loss gradient of {}", n.name())));
        }
        self.apply(&Net::ENCODERS_GENERATORS, &g_grads);
        self.check_params(&Net::ENCODERS_GENERATORS)?;
        if d_before != self.model.fingerprint(&Net::DISCRIMINATORS) {
            return Err(Error::InvalidConfig("encoder/generator update touched discriminator parameters".into()));
        }
        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            d_clean,
            d_corrupted,
            generator,
            d_real_clean_logit: d_real,
            d_fake_clean_logit: d_fake,
        })
    }
}

fn check_terms(b: &LossBreakdown) -> Result<()> {
    let t = &b.terms;
    let named = [
        ("adv_clean", t.adv_clean),
        ("adv_corrupted", t.adv_corrupted),
        ("rec", t.rec),
        ("cycle", t.cycle),
        ("art", t.art),
        ("sim", t.sim.unwrap_or(0.0)),
        ("total", b.total),
    ];
    match named.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(Error::NonFinite(format!("loss term {name} = {v}"))),
        None => Ok(()),
    }
}

/// `G_clean(E_corrupted(xᵃ))` for a batch.
pub fn correct_batch(m: &ModelBundle, x_a: &Tensor) -> Result<Tensor> {
    let c_a = m.encode_corrupted(x_a)?;
    m.decode_clean(&c_a)
}

/// Metal-artefact-reduced version of a corrupted slice.
pub fn correct(m: &ModelBundle, x_a: &MultimodalSlice) -> Result<MultimodalSlice> {
    let t = m.to_tensor(&[x_a])?;
    let out = correct_batch(m, &t)?;
    Ok(m.to_slices(&out, Domain::Clean)?.remove(0))
}

/// `G_corrupted(E_clean(y), E_artefact(xᵃ))`: the artefact of `x_a` applied to the anatomy of `y`.
pub fn synthesize_artefact(m: &ModelBundle, y: &MultimodalSlice, x_a: &MultimodalSlice) -> Result<MultimodalSlice> {
    let yt = m.to_tensor(&[y])?;
    let xt = m.to_tensor(&[x_a])?;
    if yt.shape != xt.shape {
        return Err(Error::ShapeMismatch("clean and corrupted slices differ in size".into()));
    }
    let c = m.encode_clean(&yt)?;
    let a = m.encode_artefact(&xt)?;
    let out = m.decode_corrupted(&c, &a)?;
    Ok(m.to_slices(&out, Domain::Corrupted)?.remove(0))
}

/// Clean reconstruction `G_clean(E_clean(y))`.
pub fn reconstruct_clean(m: &ModelBundle, y: &Tensor) -> Result<Tensor> {
    let c = m.encode_clean(y)?;
    m.decode_clean(&c)
}

/// Similarity loss of the corrected batch (two-channel modes only).
pub fn validation_sim(m: &ModelBundle, x_a: &Tensor, lncc: &LnccConfig) -> Result<f64> {
    let x_hat = correct_batch(m, x_a)?;
    Ok(batch_sim_loss(&to_batch(&x_hat), lncc)?.0)
}

/// Content code of a corrupted batch, exposed for inspection.
pub fn content_code(m: &ModelBundle, x_a: &Tensor) -> Result<LatentCode> {
    let c = m.encode_corrupted(x_a)?;
    debug_assert_eq!(c.kind, CodeKind::Content);
    Ok(c)
}

const STREAM_CLEAN_ORDER: u64 = 0x5348_0001;
const STREAM_CORRUPTED_ORDER: u64 = 0x5348_0002;

/// Stateless epoch schedule over two unpaired sets: an epoch is one pass over
/// the smaller set, and both sets are reshuffled every epoch from
/// `(seed, epoch)`, so the batch of any step is a pure function of its index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSchedule {
    pub n_clean: usize,
    pub n_corrupted: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchSchedule {
    pub fn new(n_clean: usize, n_corrupted: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if n_clean.min(n_corrupted) < batch_size {
            return Err(Error::InvalidConfig(format!(
                "batch_size {batch_size} exceeds the smaller training set ({} samples)",
                n_clean.min(n_corrupted)
            )));
        }
        Ok(Self {
            n_clean,
            n_corrupted,
            batch_size,
            seed,
        })
    }

    pub fn steps_per_epoch(&self) -> u64 {
        (self.n_clean.min(self.n_corrupted) / self.batch_size) as u64
    }

    fn order(&self, n: usize, stream: u64, epoch: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut r = rng::rng(rng::derive(self.seed, epoch), stream);
        idx.shuffle(&mut r);
        idx
    }

    /// `(corrupted indices, clean indices)` for zero-based `step`.
    pub fn batch(&self, step: u64) -> (Vec<usize>, Vec<usize>) {
        let spe = self.steps_per_epoch();
        let epoch = step / spe;
        let k = (step % spe) as usize * self.batch_size;
        let corrupted = self.order(self.n_corrupted, STREAM_CORRUPTED_ORDER, epoch)[k..k + self.batch_size].to_vec();
        let clean = self.order(self.n_clean, STREAM_CLEAN_ORDER, epoch)[k..k + self.batch_size].to_vec();
        (corrupted, clean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArchConfig, Mode};
    use rand_distr::{Distribution, Uniform};

    fn tiny() -> ArchConfig {
        ArchConfig {
            base_channels: 4,
            artefact_channels: 2,
            disc_channels: 4,
            res_blocks: 1,
        }
    }

    fn images(shape: [usize; 4], seed: u64) -> Tensor {
        let mut r = rng::rng(seed, 7);
        let u = Uniform::new(-1.0f32, 1.0).unwrap();
        Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| u.sample(&mut r)).collect())
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        for mode in Mode::ALL {
            let m = ModelBundle::new(mode, tiny(), 1).unwrap();
            let before = m.clone();
            let cfg = StepConfig {
                learning_rate: 0.0,
                ..StepConfig::default()
            };
            let mut t = Trainer::new(m, cfg).unwrap();
            let c = mode.n_channels();
            t.step(&images([2, c, 16, 16], 1), &images([2, c, 16, 16], 2)).unwrap();
            assert_eq!(t.model, before);
        }
    }

    #[test]
    fn step_changes_both_groups_and_reports_terms() {
        let m = ModelBundle::new(Mode::Madn, tiny(), 2).unwrap();
        let before = m.clone();
        let mut t = Trainer::new(m, StepConfig { learning_rate: 1e-3, ..StepConfig::default() }).unwrap();
        let s = t.step(&images([2, 2, 16, 16], 3), &images([2, 2, 16, 16], 4)).unwrap();
        assert_eq!(s.step, 1);
        assert!(s.generator.terms.sim.is_some());
        for net in Net::ALL {
            assert_ne!(t.model.params(net), before.params(net), "{}", net.name());
        }
        let mut t2 = Trainer::new(ModelBundle::new(Mode::AdnCt, tiny(), 2).unwrap(), StepConfig::default()).unwrap();
        let s2 = t2.step(&images([2, 1, 16, 16], 3), &images([2, 1, 16, 16], 4)).unwrap();
        assert!(s2.generator.terms.sim.is_none());
    }

    #[test]
    fn wrong_channels_rejected() {
        let mut t = Trainer::new(ModelBundle::new(Mode::AdnMr, tiny(), 0).unwrap(), StepConfig::default()).unwrap();
        let x = images([1, 2, 16, 16], 0);
        assert!(matches!(t.step(&x, &x), Err(Error::ChannelMismatch { .. })));
    }

    #[test]
    fn non_finite_input_is_named() {
        let mut t = Trainer::new(ModelBundle::new(Mode::AdnCt, tiny(), 0).unwrap(), StepConfig::default()).unwrap();
        let mut x = images([1, 1, 16, 16], 0);
        x.data[5] = f32::NAN;
        let y = images([1, 1, 16, 16], 1);
        match t.step(&x, &y) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("corrupted input")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedule_is_a_pure_function_of_step() {
        let s = BatchSchedule::new(10, 7, 3, 5).unwrap();
        assert_eq!(s.steps_per_epoch(), 2);
        assert_eq!(s.batch(3), s.batch(3));
        let (a, b) = s.batch(0);
        let (c, _) = s.batch(1);
        assert!(a.iter().all(|i| !c.contains(i)));
        assert!(a.iter().all(|i| *i < 7) && b.iter().all(|i| *i < 10));
        assert_ne!(s.batch(0), s.batch(2));
        assert!(BatchSchedule::new(2, 10, 3, 0).is_err());
    }

    #[test]
    fn correction_paths_keep_shape_and_range() {
        let m = ModelBundle::new(Mode::Madn, tiny(), 3).unwrap();
        let x = images([1, 2, 16, 16], 9);
        let s = m.to_slices(&x, Domain::Corrupted).unwrap().remove(0);
        let out = correct(&m, &s).unwrap();
        assert_eq!((out.width(), out.height(), out.n_channels()), (16, 16, 2));
        assert_eq!(out, correct(&m, &s).unwrap());
        assert!(out.channels().iter().all(|g| g.iter().all(|v| (-1.0..=1.0).contains(v))));
        let syn = synthesize_artefact(&m, &out, &s).unwrap();
        assert_eq!(syn.domain, Domain::Corrupted);
        assert!(validation_sim(&m, &x, &LnccConfig::default()).unwrap() >= 0.0);
    }
}
