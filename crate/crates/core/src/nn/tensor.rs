use alloc::vec;
use alloc::vec::Vec;

/// Dense NCHW tensor. Parameters use the same container with their own
/// interpretation of the four axes (e.g. `[out, in, kh, kw]` for convolutions).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Contiguous samples `[start, start + count)` along the batch axis.
    pub fn narrow_batch(&self, start: usize, count: usize) -> Tensor {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor::from_vec(
            [count, self.shape[1], self.shape[2], self.shape[3]],
            self.data[start * per..(start + count) * per].to_vec(),
        )
    }

    /// Concatenation along the batch axis.
    pub fn cat_batch(parts: &[&Tensor]) -> Tensor {
        let [_, c, h, w] = parts[0].shape;
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            assert_eq!([p.shape[1], p.shape[2], p.shape[3]], [c, h, w]);
            data.extend_from_slice(&p.data);
            n += p.shape[0];
        }
        Tensor::from_vec([n, c, h, w], data)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64).collect()
    }

    pub fn from_f64(shape: [usize; 4], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.iter().map(|v| *v as f32).collect())
    }
}
