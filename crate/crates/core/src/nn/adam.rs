use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::param::{GradSet, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one [`ParamSet`], flattened in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn zeros_for(p: &ParamSet) -> Self {
        let n = p.n_values();
        Self {
            step: 0,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
        }
    }
}

/// Adam optimiser over one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        Self {
            config,
            state: AdamState::zeros_for(params),
        }
    }

    /// Applies one update; tensors without a gradient keep their moments and values.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradSet) {
        assert_eq!(self.state.m.len(), params.n_values(), "optimiser state does not match parameters");
        self.state.step += 1;
        let c = self.config;
        let t = self.state.step as i32;
        let bc1 = 1.0 - (c.beta1 as f64).powi(t);
        let bc2 = 1.0 - (c.beta2 as f64).powi(t);
        let step_size = (c.lr as f64 / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let mut off = 0;
        for (tensor, grad) in params.tensors_mut().iter_mut().zip(&grads.grads) {
            let n = tensor.len();
            if let Some(g) = grad {
                let m = &mut self.state.m[off..off + n];
                let v = &mut self.state.v[off..off + n];
                for i in 0..n {
                    let gi = g.data[i];
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                    tensor.data[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + c.eps);
                }
            }
            off += n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::from_vec([1, 1, 1, 2], alloc::vec![1.0, -1.0]));
        let mut g = GradSet::zeros_for(&p);
        g.accumulate(0, &Tensor::from_vec([1, 1, 1, 2], alloc::vec![3.0, -0.5]));
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &p);
        opt.step(&mut p, &g);
        let d = &p.get(0).data;
        assert!((d[0] - 0.9).abs() < 1e-6 && (d[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn no_gradient_no_update() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::from_vec([1, 1, 1, 1], alloc::vec![2.0]));
        let g = GradSet::zeros_for(&p);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &g);
        assert_eq!(p.get(0).data[0], 2.0);
    }
}
