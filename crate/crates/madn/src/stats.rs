//! Two-tailed paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    /// `None` when the differences have zero variance.
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub degenerate: bool,
}

impl TTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p.is_some_and(|p| p < alpha)
    }
}

/// Classical paired t-test on `a[i] - b[i]` with `n - 1` degrees of freedom.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Format(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::Format(format!("paired t-test needs at least 3 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite paired difference".into()));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 || d.windows(2).all(|w| w[0] == w[1]) {
        return Ok(TTest {
            n,
            mean_diff: mean,
            t: None,
            p: None,
            degenerate: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df >= 2");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTest {
        n,
        mean_diff: mean,
        t: Some(t),
        p: Some(p),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert!((r.t.unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // df = 2: p = 1 - t / sqrt(t^2 + 2)
        let t = r.t.unwrap();
        assert!((r.p.unwrap() - (1.0 - t / (t * t + 2.0).sqrt())).abs() < 1e-10);
        assert!((r.p.unwrap() - 0.0742).abs() < 1e-3);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let r = paired_ttest(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert!(r.degenerate && r.p.is_none());
        assert!(!r.significant(0.05));
        assert!(paired_ttest(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0, 3.0], &[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn negation_flips_t_keeps_p(d in prop::collection::vec(-5.0f64..5.0, 3..20)) {
            let zeros = vec![0.0; d.len()];
            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
            let a = paired_ttest(&d, &zeros).unwrap();
            let b = paired_ttest(&neg, &zeros).unwrap();
            prop_assert_eq!(a.degenerate, b.degenerate);
            if let (Some(ta), Some(tb)) = (a.t, b.t) {
                prop_assert!((ta + tb).abs() <= 1e-12 * ta.abs().max(1.0));
                prop_assert!((a.p.unwrap() - b.p.unwrap()).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&a.p.unwrap()));
            }
        }

        #[test]
        fn p_decreases_with_abs_t(d in prop::collection::vec(-5.0f64..5.0, 4..12), k in 1.1f64..4.0) {
            // shifting the differences away from zero at fixed spread raises |t|
            let zeros = vec![0.0; d.len()];
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let base: Vec<f64> = d.iter().map(|v| v - mean + 0.5).collect();
            let far: Vec<f64> = d.iter().map(|v| v - mean + 0.5 * k).collect();
            let a = paired_ttest(&base, &zeros).unwrap();
            let b = paired_ttest(&far, &zeros).unwrap();
            prop_assume!(!a.degenerate);
            prop_assert!(b.t.unwrap().abs() > a.t.unwrap().abs());
            prop_assert!(b.p.unwrap() <= a.p.unwrap());
        }
    }
}
