//! im2col/col2im and GEMM wrappers behind the convolution ops.

/// Geometry of a 2D convolution seen from its (larger) input side.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let out_h = (in_h + 2 * pad - kernel) / stride + 1;
        let out_w = (in_w + 2 * pad - kernel) / stride + 1;
        Self {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            pad,
            out_h,
            out_w,
        }
    }

    #[inline]
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    #[inline]
    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// `col[(c, ki, kj), (oy, ox)] = img[c, oy·s + ki − p, ox·s + kj − p]` (zero outside).
pub(crate) fn im2col(img: &[f32], g: &ConvGeom, col: &mut [f32]) {
    let p = g.col_cols();
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        dst_row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    if g.stride == 1 {
                        let off = kj as isize - g.pad as isize;
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = ox as isize + off;
                            *d = if ix < 0 || ix >= g.in_w as isize { 0.0 } else { src[ix as usize] };
                        }
                    } else {
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            *d = if ix < 0 || ix >= g.in_w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `img` (not cleared).
pub(crate) fn col2im(col: &[f32], g: &ConvGeom, img: &mut [f32]) {
    let p = g.col_cols();
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut img[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let src_row = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, v) in src_row.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 convolutions with few output channels are memory-bound through
/// im2col; these direct loops touch each input row once per kernel tap.
pub(crate) fn use_direct(cout: usize, stride: usize) -> bool {
    stride == 1 && cout <= 4
}

/// Valid output range `[lo, hi)` along one axis for tap offset `off = k − pad`.
#[inline]
fn tap_range(n_out: usize, n_in: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n_in as isize - off).clamp(0, n_out as isize) as usize;
    (lo.min(hi), hi)
}

/// `out[co] += Σ w[co, ci, ki, kj] · img[ci, y + ki − p, x + kj − p]` for one sample.
pub(crate) fn direct_conv(img: &[f32], w: &[f32], g: &ConvGeom, cout: usize, out: &mut [f32]) {
    let (h, wd, k) = (g.in_h, g.in_w, g.kernel);
    let (oh, ow) = (g.out_h, g.out_w);
    for co in 0..cout {
        let dst = &mut out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..g.channels {
            let src = &img[ci * h * wd..(ci + 1) * h * wd];
            for ki in 0..k {
                let oy = ki as isize - g.pad as isize;
                let (y0, y1) = tap_range(oh, h, oy);
                for kj in 0..k {
                    let wv = w[((co * g.channels + ci) * k + ki) * k + kj];
                    let ox = kj as isize - g.pad as isize;
                    let (x0, x1) = tap_range(ow, wd, ox);
                    for y in y0..y1 {
                        let iy = (y as isize + oy) as usize;
                        let d = &mut dst[y * ow + x0..y * ow + x1];
                        let s = &src[iy * wd + (x0 as isize + ox) as usize..][..x1 - x0];
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
}

/// Input and weight gradients of [`direct_conv`] for one sample (accumulated).
pub(crate) fn direct_conv_backward(
    img: &[f32],
    w: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    cout: usize,
    mut dx: Option<&mut [f32]>,
    mut dw: Option<&mut [f32]>,
) {
    let (h, wd, k) = (g.in_h, g.in_w, g.kernel);
    let (oh, ow) = (g.out_h, g.out_w);
    for co in 0..cout {
        let gy = &dy[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..g.channels {
            let src = &img[ci * h * wd..(ci + 1) * h * wd];
            for ki in 0..k {
                let oy = ki as isize - g.pad as isize;
                let (y0, y1) = tap_range(oh, h, oy);
                for kj in 0..k {
                    let widx = ((co * g.channels + ci) * k + ki) * k + kj;
                    let ox = kj as isize - g.pad as isize;
                    let (x0, x1) = tap_range(ow, wd, ox);
                    let mut acc = 0.0f32;
                    for y in y0..y1 {
                        let iy = (y as isize + oy) as usize;
                        let base = iy * wd + (x0 as isize + ox) as usize;
                        let gr = &gy[y * ow + x0..y * ow + x1];
                        if dw.is_some() {
                            acc += gr.iter().zip(&src[base..base + x1 - x0]).map(|(a, b)| a * b).sum::<f32>();
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let wv = w[widx];
                            let d = &mut dx[ci * h * wd + base..ci * h * wd + base + x1 - x0];
                            for (a, b) in d.iter_mut().zip(gr) {
                                *a += wv * b;
                            }
                        }
                    }
                    if let Some(dw) = dw.as_deref_mut() {
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
}

/// Strided matrix view: element `(i, j)` lives at `ptr[i·rs + j·cs]`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f32],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major `rows × cols` matrix.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

/// `C[m×n] = alpha·A[m×k]·B[k×n] + beta·C`, with `C` row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, alpha: f32, a: View<'_>, b: View<'_>, beta: f32, c: &mut [f32]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        let a_end = (m - 1) * a.rs + (k - 1) * a.cs;
        let b_end = (k - 1) * b.rs + (n - 1) * b.cs;
        assert!(a_end < a.data.len() && b_end < b.data.len());
    }
    // SAFETY: the bounds of every accessed element were checked above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn gemm_small() {
        // [1 2; 3 4] x [5 6; 7 8]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, View::row_major(&a, 2), View::row_major(&b, 2), 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, 1.0, View::transposed(&a, 2), View::row_major(&b, 2), 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn direct_conv_matches_im2col_gemm() {
        let (cin, cout, h, w, k, pad) = (3, 2, 7, 5, 3, 1);
        let g = ConvGeom::new(cin, h, w, k, 1, pad);
        let img: alloc::vec::Vec<f32> = (0..cin * h * w).map(|i| ((i * 29) % 17) as f32 / 8.0 - 1.0).collect();
        let wt: alloc::vec::Vec<f32> = (0..cout * cin * k * k).map(|i| ((i * 11) % 13) as f32 / 6.0 - 1.0).collect();
        let mut col = vec![0.0; g.col_rows() * g.col_cols()];
        im2col(&img, &g, &mut col);
        let mut reference = vec![0.0; cout * g.col_cols()];
        gemm(cout, g.col_rows(), g.col_cols(), 1.0, View::row_major(&wt, g.col_rows()), View::row_major(&col, g.col_cols()), 0.0, &mut reference);
        let mut out = vec![0.0; reference.len()];
        direct_conv(&img, &wt, &g, cout, &mut out);
        for (a, b) in out.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-5);
        }
        // adjoint checks: <dy, conv(x)> = <conv_x^T(dy), x> and = <dw, w>
        let dy: alloc::vec::Vec<f32> = (0..out.len()).map(|i| ((i * 5) % 7) as f32 - 3.0).collect();
        let mut dx = vec![0.0; img.len()];
        let mut dw = vec![0.0; wt.len()];
        direct_conv_backward(&img, &wt, &dy, &g, cout, Some(&mut dx), Some(&mut dw));
        let lhs: f32 = dy.iter().zip(&out).map(|(a, b)| a * b).sum();
        let via_x: f32 = dx.iter().zip(&img).map(|(a, b)| a * b).sum();
        let via_w: f32 = dw.iter().zip(&wt).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-3 * lhs.abs().max(1.0));
        assert!((lhs - via_w).abs() < 1e-3 * lhs.abs().max(1.0));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom::new(2, 5, 6, 3, 2, 1);
        let img: alloc::vec::Vec<f32> = (0..60).map(|i| ((i * 37) % 11) as f32 - 5.0).collect();
        let cols: alloc::vec::Vec<f32> = (0..g.col_rows() * g.col_cols()).map(|i| ((i * 13) % 7) as f32 - 3.0).collect();
        let mut c = vec![0.0; cols.len()];
        im2col(&img, &g, &mut c);
        let lhs: f32 = c.iter().zip(&cols).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; img.len()];
        col2im(&cols, &g, &mut back);
        let rhs: f32 = back.iter().zip(&img).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
