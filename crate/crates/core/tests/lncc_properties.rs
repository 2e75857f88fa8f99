//! LNCC properties and agreement with a brute-force windowed oracle.

use madn_core::lncc::{gaussian_kernel, lncc_map, local_moments, sim_loss, LnccConfig};
use madn_core::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOUND: f64 = 1.0 + 1e-6;

/// Mirror without edge repetition, written out as a walk rather than modular
/// arithmetic.
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2D Gaussian-weighted moments; no separability, no shared code.
struct Oracle {
    w: Vec<f64>,
    r: isize,
}

impl Oracle {
    fn new(cfg: &LnccConfig) -> Self {
        let r = cfg.truncation_radius as isize;
        let raw: Vec<f64> = (-r..=r).map(|t| (-(t as f64).powi(2) / (2.0 * cfg.sigma.powi(2))).exp()).collect();
        let z: f64 = raw.iter().sum();
        Self {
            w: raw.into_iter().map(|v| v / z).collect(),
            r,
        }
    }

    fn blur(&self, f: impl Fn(usize, usize) -> f64, width: usize, height: usize, x: usize, y: usize) -> f64 {
        let mut s = 0.0;
        for dy in -self.r..=self.r {
            for dx in -self.r..=self.r {
                let wt = self.w[(dx + self.r) as usize] * self.w[(dy + self.r) as usize];
                s += wt * f(mirror(x as isize + dx, width), mirror(y as isize + dy, height));
            }
        }
        s
    }

    fn moments(&self, a: &Grid<f64>, x: usize, y: usize) -> (f64, f64) {
        let (w, h) = (a.width(), a.height());
        let m = self.blur(|i, j| a[(i, j)], w, h, x, y);
        let s = self.blur(|i, j| a[(i, j)].powi(2), w, h, x, y);
        (m, (s - m * m).max(0.0))
    }

    fn lncc(&self, a: &Grid<f64>, b: &Grid<f64>, eps: f64) -> Grid<f64> {
        let (w, h) = (a.width(), a.height());
        Grid::from_fn(w, h, |x, y| {
            let (ma, va) = self.moments(a, x, y);
            let (mb, vb) = self.moments(b, x, y);
            let sab = self.blur(|i, j| a[(i, j)] * b[(i, j)], w, h, x, y);
            (sab - ma * mb) / ((va + eps) * (vb + eps)).sqrt()
        })
    }
}

fn noise(seed: u64, w: usize, h: usize) -> Grid<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Grid::from_fn(w, h, |_, _| r.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn cfg_strategy() -> impl Strategy<Value = LnccConfig> {
    (0.6f64..3.0, 0usize..3).prop_map(|(sigma, extra)| {
        let mut c = LnccConfig::with_sigma(sigma);
        c.truncation_radius += extra;
        c
    })
}

/// Pixel indices where the local variance of `x` reaches `100 ε`.
fn textured(x: &Grid<f64>, cfg: &LnccConfig) -> Vec<usize> {
    let (_, var) = local_moments(x, cfg).unwrap();
    var.iter().enumerate().filter(|(_, v)| **v >= 100.0 * cfg.epsilon).map(|(i, _)| i).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounded(seed in any::<u64>(), n in 6usize..24, cfg in cfg_strategy(), scale in 1e-3f64..10.0) {
        let a = noise(seed, n, n).scale(scale);
        let b = noise(seed ^ 0x9e37, n, n);
        let m = lncc_map(&a, &b, &cfg).unwrap();
        prop_assert!(m.iter().all(|v| v.abs() <= BOUND));
        let s = sim_loss(&a, &b, &cfg).unwrap();
        prop_assert!((0.0..=BOUND).contains(&s));
    }

    #[test]
    fn symmetric(seed in any::<u64>(), n in 6usize..24, cfg in cfg_strategy()) {
        let a = noise(seed, n, n + 3);
        let b = noise(seed.wrapping_add(1), n, n + 3);
        prop_assert_eq!(lncc_map(&a, &b, &cfg).unwrap(), lncc_map(&b, &a, &cfg).unwrap());
    }

    #[test]
    fn self_similar_and_antisymmetric(seed in any::<u64>(), n in 6usize..24, cfg in cfg_strategy()) {
        let x = noise(seed, n, n);
        let neg = x.map(|v| -v);
        let same = lncc_map(&x, &x, &cfg).unwrap();
        let anti = lncc_map(&x, &neg, &cfg).unwrap();
        let (_, var) = local_moments(&x, &cfg).unwrap();
        for i in textured(&x, &cfg) {
            // exactly v / (v + ε), hence within 1/101 of ±1
            let v = var.as_slice()[i];
            let expect = v / (v + cfg.epsilon);
            prop_assert!((same.as_slice()[i] - expect).abs() < 1e-9);
            prop_assert!((anti.as_slice()[i] + expect).abs() < 1e-9);
            prop_assert!(expect >= 100.0 / 101.0 - 1e-12);
        }
    }

    #[test]
    fn positive_affine_rescales_only_through_floor(seed in any::<u64>(), n in 6usize..24, cfg in cfg_strategy()) {
        // cov and var scale by 3 and 9 while ε stays put, so the map changes by
        // exactly sqrt((v + ε) / (v + ε/9)).
        let x = noise(seed, n, n);
        let y = noise(seed ^ 0xabc, n, n);
        let base = lncc_map(&x, &y, &cfg).unwrap();
        let got = lncc_map(&x.map(|v| 3.0 * v + 0.2), &y, &cfg).unwrap();
        let (_, vx) = local_moments(&x, &cfg).unwrap();
        let eps = cfg.epsilon;
        for i in 0..x.len() {
            let v = vx.as_slice()[i];
            let predicted = base.as_slice()[i] * ((v + eps) / (v + eps / 9.0)).sqrt();
            prop_assert!((got.as_slice()[i] - predicted).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_direct_oracle(seed in any::<u64>(), w in 5usize..14, h in 5usize..14, cfg in cfg_strategy()) {
        let a = noise(seed, w, h);
        let b = noise(seed ^ 0x5555, w, h);
        let oracle = Oracle::new(&cfg);
        let got = lncc_map(&a, &b, &cfg).unwrap();
        prop_assert!(max_abs_diff(&got, &oracle.lncc(&a, &b, cfg.epsilon)) < 1e-6);
    }
}

#[test]
fn kernel_normalised_and_symmetric() {
    for cfg in [LnccConfig::default(), LnccConfig::with_sigma(0.7), LnccConfig::with_sigma(2.3)] {
        let k = gaussian_kernel(&cfg).unwrap();
        assert_eq!(k.len(), 2 * cfg.truncation_radius + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, v) in k.iter().enumerate() {
            assert_eq!(*v, k[k.len() - 1 - i]);
        }
    }
    let cfg = LnccConfig::default();
    let z: f64 = (-15i32..=15).map(|t| (-(t * t) as f64 / 50.0).exp()).sum();
    assert!((gaussian_kernel(&cfg).unwrap()[15] - 1.0 / z).abs() < 1e-15);
}

#[test]
fn positive_affine_invariant_on_textured_pixels() {
    let cfg = LnccConfig::default();
    for seed in 0..4 {
        let x = noise(seed, 48, 48);
        let y = noise(seed + 50, 48, 48);
        let base = lncc_map(&x, &y, &cfg).unwrap();
        let got = lncc_map(&x.map(|v| 3.0 * v + 0.2), &y, &cfg).unwrap();
        let oracle = Oracle::new(&cfg).lncc(&x.map(|v| 3.0 * v + 0.2), &y, cfg.epsilon);
        for i in textured(&x, &cfg) {
            assert!((got.as_slice()[i] - base.as_slice()[i]).abs() < 1e-5);
            assert!((got.as_slice()[i] - oracle.as_slice()[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn constant_image_moments() {
    let (m, v) = local_moments(&Grid::filled(12, 9, 0.37), &LnccConfig::with_sigma(1.5)).unwrap();
    assert!(m.iter().all(|x| (x - 0.37).abs() < 1e-10));
    assert!(v.iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn moments_match_oracle_default_window() {
    let cfg = LnccConfig::default();
    let img = noise(11, 16, 16);
    let (mean, var) = local_moments(&img, &cfg).unwrap();
    let o = Oracle::new(&cfg);
    for y in 0..16 {
        for x in 0..16 {
            let (m, v) = o.moments(&img, x, y);
            assert!((mean[(x, y)] - m).abs() < 1e-6);
            assert!((var[(x, y)] - v).abs() < 1e-6);
        }
    }
}

#[test]
fn moments_shift_equivariant_in_interior() {
    let cfg = LnccConfig::with_sigma(1.0);
    let r = cfg.truncation_radius;
    let img = noise(5, 24, 24);
    let shifted = Grid::from_fn(24, 24, |x, y| img[((x + 2).min(23), (y + 1).min(23))]);
    let (m0, v0) = local_moments(&img, &cfg).unwrap();
    let (m1, v1) = local_moments(&shifted, &cfg).unwrap();
    for y in r + 1..24 - r - 2 {
        for x in r + 2..24 - r - 3 {
            assert!((m1[(x, y)] - m0[(x + 2, y + 1)]).abs() < 1e-12);
            assert!((v1[(x, y)] - v0[(x + 2, y + 1)]).abs() < 1e-12);
        }
    }
}

#[test]
fn sim_loss_fixed_points() {
    let cfg = LnccConfig::default();
    let x = noise(21, 32, 32);
    assert!(textured(&x, &cfg).len() == x.len());
    assert!(sim_loss(&x, &x, &cfg).unwrap().abs() < 1e-3);
    assert!(sim_loss(&x, &x.map(|v| -v), &cfg).unwrap().abs() < 1e-3);
}

#[test]
fn sim_loss_noise_pair_matches_oracle() {
    let cfg = LnccConfig::default();
    let a = noise(100, 64, 64);
    let b = noise(200, 64, 64);
    let s = sim_loss(&a, &b, &cfg).unwrap();
    assert!(s > 0.5 && s <= 1.0, "{s}");
    let o = Oracle::new(&cfg).lncc(&a, &b, cfg.epsilon);
    let expect = 1.0 - o.iter().map(|v| v.abs()).sum::<f64>() / o.len() as f64;
    assert!((s - expect).abs() < 1e-6, "{s} vs {expect}");
}
