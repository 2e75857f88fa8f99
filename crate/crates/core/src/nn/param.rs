use alloc::string::String;
use alloc::vec::Vec;

use super::tensor::Tensor;

/// Named parameter tensors of one network.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// FNV-1a over names, shapes and the exact bits of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        };
        for (name, t) in self.iter() {
            name.bytes().for_each(|b| eat(b as u64));
            t.shape.iter().for_each(|s| eat(*s as u64));
            t.data.iter().for_each(|v| eat(v.to_bits() as u64));
        }
        h
    }
}

/// Gradient tensors aligned with a [`ParamSet`]; `None` where no gradient flowed.
#[derive(Clone, Debug, Default)]
pub struct GradSet {
    pub grads: Vec<Option<Tensor>>,
}

impl GradSet {
    pub fn zeros_for(p: &ParamSet) -> Self {
        Self {
            grads: (0..p.len()).map(|_| None).collect(),
        }
    }

    pub fn accumulate(&mut self, idx: usize, g: &Tensor) {
        match &mut self.grads[idx] {
            Some(t) => t.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }
}
