//! Named parameter storage shared by every network in a run.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// A dense row-major array with an explicit shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns when viewed as a matrix; vectors are a single row.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [c] => (1, *c),
            [r, rest @ ..] => (*r, rest.iter().product()),
        }
    }
}

/// Parameters, their gradients and RMSprop accumulators, keyed by name.
///
/// The three maps always hold the same key set with matching lengths.
/// Ordering is lexicographic by name so iteration is deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Vec<f64>>,
    rmsprop_state: BTreeMap<String, Vec<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a parameter. Its gradient and accumulator start at zero.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.grads.insert(name.clone(), vec![0.0; value.len()]);
        self.rmsprop_state.insert(name.clone(), vec![0.0; value.len()]);
        self.entries.insert(name, value);
    }

    /// Registers the weight `[out, in]` and bias `[out]` of a dense layer,
    /// both uniform in `±1/sqrt(fan_in)`.
    pub fn init_dense<R: Rng + ?Sized>(&mut self, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(
            format!("{prefix}.w"),
            Tensor {
                shape: vec![fan_out, fan_in],
                data: w,
            },
        );
        self.insert(
            format!("{prefix}.b"),
            Tensor {
                shape: vec![fan_out],
                data: b,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(Vec::as_slice)
    }

    pub fn rmsprop_state(&self, name: &str) -> Option<&[f64]> {
        self.rmsprop_state.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds `delta` into the gradient of `name`.
    pub fn accumulate_grad(&mut self, name: &str, delta: &[f64]) {
        let g = self
            .grads
            .get_mut(name)
            .unwrap_or_else(|| panic!("gradient for unknown parameter `{name}`"));
        assert_eq!(g.len(), delta.len(), "gradient length for `{name}`");
        for (a, b) in g.iter_mut().zip(delta) {
            *a += b;
        }
    }

    /// Copies every value from `other` (same key set) into `self`; gradients
    /// and accumulators of `self` are left alone.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (name, t) in &other.entries {
            let dst = self
                .entries
                .get_mut(name)
                .unwrap_or_else(|| panic!("copy into store missing `{name}`"));
            dst.data.copy_from_slice(&t.data);
        }
    }

    /// An independent copy of the values with fresh gradients and accumulators,
    /// as used for a target network.
    pub fn snapshot(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, t) in &self.entries {
            out.insert(name.clone(), t.clone());
        }
        out
    }

    /// Flattened values in name order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.entries.values().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Flattened gradients in name order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.values().flat_map(|g| g.iter().copied()).collect()
    }

    /// Overwrites all values from a flat vector in name order.
    pub fn set_flat_values(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_scalars());
        let mut off = 0;
        for t in self.entries.values_mut() {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Values equal entry-by-entry (bitwise on the f64 payloads).
    pub fn values_bit_equal(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.shape == b.shape
                    && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub(crate) fn grads_and_state_mut(
        &mut self,
    ) -> impl Iterator<Item = (&String, &mut Tensor, &Vec<f64>, &mut Vec<f64>)> {
        let state = &mut self.rmsprop_state;
        let grads = &self.grads;
        self.entries.iter_mut().zip(state.values_mut()).map(move |((k, t), s)| (k, t, &grads[k], s))
    }

    pub(crate) fn grads_iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.grads.iter().map(|(k, g)| (k.as_str(), g.as_slice()))
    }
}
