//! Loss terms against scalar hand-written formulas on random inputs.

use madn_core::lncc::LnccConfig;
use madn_core::losses::{
    adv_loss, art_loss, assemble_total, cycle_loss, rec_loss, sr_loss, total_loss, AdvSide, ImageBatch, LossTerms,
    LossWeights, PathOutputs,
};
use madn_core::model::Mode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(r: &mut ChaCha8Rng, shape: [usize; 4]) -> ImageBatch {
    let n = shape.iter().product();
    ImageBatch::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn outputs(seed: u64) -> PathOutputs {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let s = [2, 2, 5, 5];
    PathOutputs {
        x_a: batch(&mut r, s),
        y: batch(&mut r, s),
        x_hat: batch(&mut r, s),
        x_hat_a: batch(&mut r, s),
        y_hat: batch(&mut r, s),
        y_hat_a: batch(&mut r, s),
        cycle_rec_clean: batch(&mut r, s),
        cycle_rec_corrupted: Some(batch(&mut r, s)),
        d_fake_clean: Some(batch(&mut r, [2, 1, 3, 3])),
        d_fake_corrupted: Some(batch(&mut r, [2, 1, 3, 3])),
    }
}

fn mae(a: &ImageBatch, b: &ImageBatch) -> f64 {
    let mut s = 0.0;
    for i in 0..a.data.len() {
        s += (a.data[i] - b.data[i]).abs();
    }
    s / a.data.len() as f64
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn l1_terms_match_direct_sums(seed in any::<u64>()) {
        let p = outputs(seed);
        prop_assert!((rec_loss(&p).unwrap() - (mae(&p.x_hat_a, &p.x_a) + mae(&p.y_hat, &p.y))).abs() < 1e-8);
        let mut art = 0.0;
        for i in 0..p.x_a.data.len() {
            art += ((p.x_a.data[i] - p.x_hat.data[i]) - (p.y_hat_a.data[i] - p.y.data[i])).abs();
        }
        prop_assert!((art_loss(&p).unwrap() - art / p.x_a.data.len() as f64).abs() < 1e-8);
        let sr = mae(&p.cycle_rec_clean, &p.y);
        prop_assert!((sr_loss(&p).unwrap() - sr).abs() < 1e-8);
        let cyc = sr + mae(p.cycle_rec_corrupted.as_ref().unwrap(), &p.x_a);
        prop_assert!((cycle_loss(&p).unwrap() - cyc).abs() < 1e-8);
    }

    #[test]
    fn adversarial_matches_scalar_formula(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let real = batch(&mut r, [1, 1, 3, 3]).data.iter().map(|v| 4.0 * v).collect::<Vec<_>>();
        let fake = batch(&mut r, [1, 1, 3, 3]).data.iter().map(|v| 4.0 * v).collect::<Vec<_>>();
        let rb = ImageBatch::new([1, 1, 3, 3], real.clone()).unwrap();
        let fb = ImageBatch::new([1, 1, 3, 3], fake.clone()).unwrap();
        let n = 9.0;
        let d = -real.iter().map(|v| sigmoid(*v).ln()).sum::<f64>() / n
            - fake.iter().map(|v| (1.0 - sigmoid(*v)).ln()).sum::<f64>() / n;
        let g = -fake.iter().map(|v| sigmoid(*v).ln()).sum::<f64>() / n;
        prop_assert!((adv_loss(Some(&rb), &fb, AdvSide::Discriminator).unwrap().0 - d).abs() < 1e-8);
        prop_assert!((adv_loss(None, &fb, AdvSide::Generator).unwrap().0 - g).abs() < 1e-8);
    }

    #[test]
    fn total_is_the_hand_assembled_sum(seed in any::<u64>(), scale in 0.0f64..3.0) {
        let p = outputs(seed);
        let w = LossWeights {
            lambda_adv_clean: scale,
            lambda_adv_corrupted: 1.5,
            lambda_rec: 20.0 * scale,
            lambda_cycle: 7.0,
            lambda_art: 3.0,
            lambda_sim: 0.5 + scale,
        };
        let lncc = LnccConfig::with_sigma(1.0);
        let g = |x: &ImageBatch| adv_loss(None, x, AdvSide::Generator).unwrap().0;
        let adv = w.lambda_adv_clean * g(p.d_fake_clean.as_ref().unwrap())
            + w.lambda_adv_corrupted * g(p.d_fake_corrupted.as_ref().unwrap());
        let base = adv + w.lambda_rec * rec_loss(&p).unwrap() + w.lambda_art * art_loss(&p).unwrap();
        let (madn, _) = total_loss(&p, &w, Mode::Madn, &lncc).unwrap();
        let sim = madn.terms.sim.unwrap();
        let want = base + w.lambda_cycle * cycle_loss(&p).unwrap() + w.lambda_sim * sim;
        prop_assert!((madn.total - want).abs() < 1e-8 * want.abs().max(1.0));
        let (mc, _) = total_loss(&p, &w, Mode::MultichannelAdn, &lncc).unwrap();
        prop_assert!(mc.terms.sim.is_none());
        let want = base + w.lambda_cycle * sr_loss(&p).unwrap();
        prop_assert!((mc.total - want).abs() < 1e-8 * want.abs().max(1.0));
    }
}

#[test]
fn fixed_points_and_unit_weights() {
    let p = outputs(1);
    let mut q = p.clone();
    q.x_hat_a = q.x_a.clone();
    q.y_hat = q.y.clone();
    assert_eq!(rec_loss(&q).unwrap(), 0.0);
    let mut q = p.clone();
    // same residual on both paths
    for i in 0..q.x_a.data.len() {
        q.y_hat_a.data[i] = q.y.data[i] + (q.x_a.data[i] - q.x_hat.data[i]);
    }
    assert!(art_loss(&q).unwrap() < 1e-15);
    let ones = LossTerms {
        adv_clean: 1.0,
        adv_corrupted: 1.0,
        rec: 1.0,
        cycle: 1.0,
        art: 1.0,
        sim: Some(1.0),
    };
    assert_eq!(assemble_total(&ones, &LossWeights::default(), Mode::Madn).unwrap(), 63.0);
}
