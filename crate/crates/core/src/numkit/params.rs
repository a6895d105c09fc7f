use serde::{Deserialize, Serialize};

use super::dense::{axpy, Dense2};

/// Named trainable tensors in a fixed declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Dense2>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Dense2) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: usize) -> &Dense2 {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Dense2 {
        &mut self.tensors[id]
    }

    pub fn tensors(&self) -> &[Dense2] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Dense2] {
        &mut self.tensors
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulators mirroring a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    tensors: Vec<Dense2>,
}

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            tensors: params
                .tensors
                .iter()
                .map(|t| Dense2::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn get(&self, id: usize) -> &Dense2 {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Dense2 {
        &mut self.tensors[id]
    }

    pub fn tensors(&self) -> &[Dense2] {
        &self.tensors
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            axpy(1.0, b.data(), a.data_mut());
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn is_all_zero(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}
