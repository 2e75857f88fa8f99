use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::kernels::{col2im, direct_conv, direct_conv_backward, gemm, im2col, use_direct, ConvGeom, View};
use super::param::{GradSet, ParamSet};
use super::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f32 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param {
        set: usize,
        idx: usize,
    },
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    InstanceNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Relu(Var),
    LeakyRelu(Var, f32),
    Tanh(Var),
    Add(Var, Var),
    Concat(Var, Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Recorder for one forward pass over a fixed collection of parameter sets.
///
/// Parameter sets flagged as frozen take part in the forward pass but receive
/// no gradient, which also skips their weight-gradient GEMMs.
pub struct Tape<'p> {
    sets: Vec<&'p ParamSet>,
    trainable: Vec<bool>,
    param_vars: Vec<Vec<Option<Var>>>,
    nodes: Vec<Node>,
}

/// Cotangents produced by [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<GradSet>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].as_ref()
    }

    pub fn params(&self, set: usize) -> &GradSet {
        &self.params[set]
    }

    pub fn into_params(self) -> Vec<GradSet> {
        self.params
    }
}

impl<'p> Tape<'p> {
    pub fn new(sets: Vec<&'p ParamSet>, trainable: Vec<bool>) -> Self {
        assert_eq!(sets.len(), trainable.len());
        let param_vars = sets.iter().map(|s| vec![None; s.len()]).collect();
        Self {
            sets,
            trainable,
            param_vars,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Option<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param { set, idx } => self.sets[set].get(idx),
            _ => node.value.as_ref().expect("non-parameter nodes store their value"),
        }
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Some(t), Op::Input, false)
    }

    /// Input whose gradient is reported by [`Gradients::of`].
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(Some(t), Op::Input, true)
    }

    pub fn param(&mut self, set: usize, idx: usize) -> Var {
        if let Some(v) = self.param_vars[set][idx] {
            return v;
        }
        let v = self.push(None, Op::Param { set, idx }, self.trainable[set]);
        self.param_vars[set][idx] = Some(v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xt = self.value(x);
        let wt = self.value(w);
        let [n, cin, h, wd] = xt.shape;
        let [cout, wcin, k, _] = wt.shape;
        assert_eq!(cin, wcin, "conv2d input channels");
        let g = ConvGeom::new(cin, h, wd, k, stride, pad);
        let p = g.col_cols();
        let kk = g.col_rows();
        let mut out = Tensor::zeros([n, cout, g.out_h, g.out_w]);
        let plane = cin * h * wd;
        if use_direct(cout, stride) {
            for i in 0..n {
                let dst = &mut out.data[i * cout * p..(i + 1) * cout * p];
                direct_conv(&xt.data[i * plane..(i + 1) * plane], &wt.data, &g, cout, dst);
            }
        } else {
            let mut col = vec![0.0f32; kk * p];
            for i in 0..n {
                im2col(&xt.data[i * plane..(i + 1) * plane], &g, &mut col);
                gemm(
                    cout,
                    kk,
                    p,
                    1.0,
                    View::row_major(&wt.data, kk),
                    View::row_major(&col, p),
                    0.0,
                    &mut out.data[i * cout * p..(i + 1) * cout * p],
                );
            }
        }
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b));
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(Some(out), Op::Conv { x, w, b, stride, pad }, needs)
    }

    /// Transposed convolution with weights `[in, out, k, k]`; output side is
    /// `(h − 1)·stride − 2·pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xt = self.value(x);
        let wt = self.value(w);
        let [n, cin, hi, wi] = xt.shape;
        let [wcin, cout, k, _] = wt.shape;
        assert_eq!(cin, wcin, "conv_transpose2d input channels");
        let ho = (hi - 1) * stride + k - 2 * pad;
        let wo = (wi - 1) * stride + k - 2 * pad;
        let g = ConvGeom::new(cout, ho, wo, k, stride, pad);
        debug_assert_eq!((g.out_h, g.out_w), (hi, wi));
        let p = hi * wi;
        let kk = g.col_rows();
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        let mut col = vec![0.0f32; kk * p];
        for i in 0..n {
            gemm(
                kk,
                cin,
                p,
                1.0,
                View::transposed(&wt.data, kk),
                View::row_major(&xt.data[i * cin * p..(i + 1) * cin * p], p),
                0.0,
                &mut col,
            );
            col2im(&col, &g, &mut out.data[i * cout * ho * wo..(i + 1) * cout * ho * wo]);
        }
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b));
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(Some(out), Op::ConvTranspose { x, w, b, stride, pad }, needs)
    }

    /// Per-sample, per-channel normalisation with affine `[1, C, 1, 1]` parameters.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xt = self.value(x);
        let ga = &self.value(gamma).data;
        let be = &self.value(beta).data;
        let [n, c, h, w] = xt.shape;
        let m = h * w;
        let mut out = Tensor::zeros(xt.shape);
        let mut xhat = vec![0.0f32; xt.len()];
        let mut rstd = vec![0.0f32; n * c];
        for i in 0..n * c {
            let ch = i % c;
            let src = &xt.data[i * m..(i + 1) * m];
            let mean = src.iter().map(|v| *v as f64).sum::<f64>() / m as f64;
            let var = src.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / m as f64;
            let r = (1.0 / (var + INSTANCE_NORM_EPS as f64).sqrt()) as f32;
            rstd[i] = r;
            let mean = mean as f32;
            for j in 0..m {
                let xh = (src[j] - mean) * r;
                xhat[i * m + j] = xh;
                out.data[i * m + j] = ga[ch] * xh + be[ch];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            Some(out),
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            needs,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let needs = self.needs(x);
        self.push(Some(out), Op::Relu(x), needs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        assert!(slope > 0.0);
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= slope
            }
        });
        let needs = self.needs(x);
        self.push(Some(out), Op::LeakyRelu(x, slope), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.tanh());
        let needs = self.needs(x);
        self.push(Some(out), Op::Tanh(x), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape, self.value(b).shape, "add shapes");
        out.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(Some(out), Op::Add(a, b), needs)
    }

    /// Channel-axis concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let ta = self.value(a);
        let tb = self.value(b);
        let [n, ca, h, w] = ta.shape;
        let [nb, cb, hb, wb] = tb.shape;
        assert_eq!((n, h, w), (nb, hb, wb), "concat shapes");
        let m = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * m);
        for i in 0..n {
            data.extend_from_slice(&ta.data[i * ca * m..(i + 1) * ca * m]);
            data.extend_from_slice(&tb.data[i * cb * m..(i + 1) * cb * m]);
        }
        let out = Tensor::from_vec([n, ca + cb, h, w], data);
        let needs = self.needs(a) || self.needs(b);
        self.push(Some(out), Op::Concat(a, b), needs)
    }

    /// Reverse sweep from the given output cotangents.
    pub fn backward(&self, seeds: Vec<(Var, Tensor)>) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.shape, self.value(v).shape, "seed shape");
            accumulate(&mut grads, v, g);
        }
        let mut params: Vec<GradSet> = self.sets.iter().map(|s| GradSet::zeros_for(s)).collect();
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Input => continue,
                Op::Param { set, idx } => {
                    if let Some(g) = grads[id].as_ref() {
                        params[set].accumulate(idx, g);
                    }
                    continue;
                }
                _ => {}
            }
            let Some(dy) = grads[id].take() else {
                continue;
            };
            let y = node.value.as_ref().expect("op value");
            match &node.op {
                Op::Input | Op::Param { .. } => unreachable!(),
                Op::Conv { x, w, b, stride, pad } => {
                    self.conv_backward(&mut grads, &dy, *x, *w, *b, *stride, *pad);
                }
                Op::ConvTranspose { x, w, b, stride, pad } => {
                    self.conv_transpose_backward(&mut grads, &dy, *x, *w, *b, *stride, *pad);
                }
                Op::InstanceNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let [n, c, h, w] = dy.shape;
                    let m = h * w;
                    let ga = &self.value(*gamma).data;
                    let mut dgamma = Tensor::zeros([1, c, 1, 1]);
                    let mut dbeta = Tensor::zeros([1, c, 1, 1]);
                    let mut dx = Tensor::zeros(dy.shape);
                    for i in 0..n * c {
                        let ch = i % c;
                        let g = &dy.data[i * m..(i + 1) * m];
                        let xh = &xhat[i * m..(i + 1) * m];
                        let mut sum_g = 0.0f64;
                        let mut sum_gx = 0.0f64;
                        for j in 0..m {
                            sum_g += g[j] as f64;
                            sum_gx += (g[j] * xh[j]) as f64;
                        }
                        dgamma.data[ch] += sum_gx as f32;
                        dbeta.data[ch] += sum_g as f32;
                        if self.needs(*x) {
                            let scale = ga[ch] * rstd[i] / m as f32;
                            let (sg, sgx) = (sum_g as f32, sum_gx as f32);
                            for j in 0..m {
                                dx.data[i * m + j] = scale * (m as f32 * g[j] - sg - xh[j] * sgx);
                            }
                        }
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.needs(*gamma) {
                        accumulate(&mut grads, *gamma, dgamma);
                    }
                    if self.needs(*beta) {
                        accumulate(&mut grads, *beta, dbeta);
                    }
                }
                Op::Relu(x) | Op::LeakyRelu(x, _) => {
                    let slope = if let Op::LeakyRelu(_, s) = node.op { s } else { 0.0 };
                    let mut dx = dy;
                    for (g, v) in dx.data.iter_mut().zip(&y.data) {
                        if *v <= 0.0 {
                            *g *= slope;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let mut dx = dy;
                    for (g, v) in dx.data.iter_mut().zip(&y.data) {
                        *g *= 1.0 - v * v;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) && self.needs(*b) {
                        accumulate(&mut grads, *a, dy.clone());
                        accumulate(&mut grads, *b, dy);
                    } else if self.needs(*a) {
                        accumulate(&mut grads, *a, dy);
                    } else if self.needs(*b) {
                        accumulate(&mut grads, *b, dy);
                    }
                }
                Op::Concat(a, b) => {
                    let ca = self.value(*a).c();
                    let cb = self.value(*b).c();
                    let [n, _, h, w] = dy.shape;
                    let m = h * w;
                    if self.needs(*a) {
                        let mut da = Vec::with_capacity(n * ca * m);
                        for i in 0..n {
                            let off = i * (ca + cb) * m;
                            da.extend_from_slice(&dy.data[off..off + ca * m]);
                        }
                        accumulate(&mut grads, *a, Tensor::from_vec([n, ca, h, w], da));
                    }
                    if self.needs(*b) {
                        let mut db = Vec::with_capacity(n * cb * m);
                        for i in 0..n {
                            let off = i * (ca + cb) * m + ca * m;
                            db.extend_from_slice(&dy.data[off..off + cb * m]);
                        }
                        accumulate(&mut grads, *b, Tensor::from_vec([n, cb, h, w], db));
                    }
                }
            }
        }
        Gradients { nodes: grads, params }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        grads: &mut [Option<Tensor>],
        dy: &Tensor,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) {
        let xt = self.value(x);
        let wt = self.value(w);
        let [n, cin, h, wd] = xt.shape;
        let [cout, _, k, _] = wt.shape;
        let g = ConvGeom::new(cin, h, wd, k, stride, pad);
        let p = g.col_cols();
        let kk = g.col_rows();
        if use_direct(cout, stride) {
            let mut dw = self.needs(w).then(|| Tensor::zeros(wt.shape));
            let mut dx = self.needs(x).then(|| Tensor::zeros(xt.shape));
            let plane = cin * h * wd;
            for i in 0..n {
                direct_conv_backward(
                    &xt.data[i * plane..(i + 1) * plane],
                    &wt.data,
                    &dy.data[i * cout * p..(i + 1) * cout * p],
                    &g,
                    cout,
                    dx.as_mut().map(|t| &mut t.data[i * plane..(i + 1) * plane]),
                    dw.as_mut().map(|t| &mut t.data[..]),
                );
            }
            if let Some(dw) = dw {
                accumulate(grads, w, dw);
            }
            if let Some(dx) = dx {
                accumulate(grads, x, dx);
            }
            if let Some(b) = b.filter(|b| self.needs(*b)) {
                accumulate(grads, b, channel_sums(dy));
            }
            return;
        }
        let mut col = vec![0.0f32; kk * p];
        if self.needs(w) {
            let mut dw = Tensor::zeros(wt.shape);
            for i in 0..n {
                im2col(&xt.data[i * cin * h * wd..(i + 1) * cin * h * wd], &g, &mut col);
                gemm(
                    cout,
                    p,
                    kk,
                    1.0,
                    View::row_major(&dy.data[i * cout * p..(i + 1) * cout * p], p),
                    View::transposed(&col, p),
                    1.0,
                    &mut dw.data,
                );
            }
            accumulate(grads, w, dw);
        }
        if self.needs(x) {
            let mut dx = Tensor::zeros(xt.shape);
            for i in 0..n {
                gemm(
                    kk,
                    cout,
                    p,
                    1.0,
                    View::transposed(&wt.data, kk),
                    View::row_major(&dy.data[i * cout * p..(i + 1) * cout * p], p),
                    0.0,
                    &mut col,
                );
                col2im(&col, &g, &mut dx.data[i * cin * h * wd..(i + 1) * cin * h * wd]);
            }
            accumulate(grads, x, dx);
        }
        if let Some(b) = b.filter(|b| self.needs(*b)) {
            accumulate(grads, b, channel_sums(dy));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_transpose_backward(
        &self,
        grads: &mut [Option<Tensor>],
        dy: &Tensor,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) {
        let xt = self.value(x);
        let wt = self.value(w);
        let [n, cin, hi, wi] = xt.shape;
        let [_, cout, k, _] = wt.shape;
        let [_, _, ho, wo] = dy.shape;
        let g = ConvGeom::new(cout, ho, wo, k, stride, pad);
        let p = hi * wi;
        let kk = g.col_rows();
        let mut col = vec![0.0f32; kk * p];
        let need_w = self.needs(w);
        let need_x = self.needs(x);
        let mut dw = need_w.then(|| Tensor::zeros(wt.shape));
        let mut dx = need_x.then(|| Tensor::zeros(xt.shape));
        if need_w || need_x {
            for i in 0..n {
                im2col(&dy.data[i * cout * ho * wo..(i + 1) * cout * ho * wo], &g, &mut col);
                if let Some(dx) = dx.as_mut() {
                    gemm(
                        cin,
                        kk,
                        p,
                        1.0,
                        View::row_major(&wt.data, kk),
                        View::row_major(&col, p),
                        0.0,
                        &mut dx.data[i * cin * p..(i + 1) * cin * p],
                    );
                }
                if let Some(dw) = dw.as_mut() {
                    gemm(
                        cin,
                        p,
                        kk,
                        1.0,
                        View::row_major(&xt.data[i * cin * p..(i + 1) * cin * p], p),
                        View::transposed(&col, p),
                        1.0,
                        &mut dw.data,
                    );
                }
            }
        }
        if let Some(dw) = dw {
            accumulate(grads, w, dw);
        }
        if let Some(dx) = dx {
            accumulate(grads, x, dx);
        }
        if let Some(b) = b.filter(|b| self.needs(*b)) {
            accumulate(grads, b, channel_sums(dy));
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn add_channel_bias(out: &mut Tensor, bias: &Tensor) {
    let [n, c, h, w] = out.shape;
    let m = h * w;
    for i in 0..n * c {
        let b = bias.data[i % c];
        out.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums(dy: &Tensor) -> Tensor {
    let [n, c, h, w] = dy.shape;
    let m = h * w;
    let mut out = Tensor::zeros([1, c, 1, 1]);
    for i in 0..n * c {
        out.data[i % c] += dy.data[i * m..(i + 1) * m].iter().sum::<f32>();
    }
    out
}
