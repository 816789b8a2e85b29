//! Named learnable tensors with paired gradient buffers.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    /// Logical shape. Matrices are `[rows, cols]`; the bilinear tensor is
    /// `[d, d, d]` stored as a `(d·d) × d` matrix.
    pub shape: Vec<usize>,
    pub value: Tensor2,
    pub grad: Tensor2,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.value.data().len()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Tensor2) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Parameter(format!("duplicate parameter name `{name}`")));
        }
        if shape.iter().product::<usize>() != value.data().len() {
            return Err(Error::dims("ParamStore::add", &shape, &value.shape()));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            shape,
            value,
            grad,
        });
        Ok(id)
    }

    /// Glorot-uniform matrix.
    pub fn add_glorot<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, vec![rows, cols], Tensor2::from_raw(rows, cols, data))
    }

    pub fn add_const(&mut self, name: impl Into<String>, rows: usize, cols: usize, value: f64) -> Result<ParamId> {
        self.add(name, vec![rows, cols], Tensor2::filled(rows, cols, value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].grad
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor2) {
        let p = &mut self.params[id.0];
        debug_assert_eq!(p.grad.shape(), g.shape(), "gradient shape for {}", p.name);
        for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Global L2 norm over every gradient buffer.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, k: f64) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g *= k;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut ps = ParamStore::new();
        ps.add_const("w", 1, 2, 0.0).unwrap();
        assert!(matches!(ps.add_const("w", 1, 2, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn grad_shape_follows_value() {
        let mut ps = ParamStore::new();
        let id = ps.add("wb", vec![2, 2, 2], Tensor2::zeros(4, 2)).unwrap();
        assert_eq!(ps.grad(id).shape(), [4, 2]);
        assert_eq!(ps.numel(), 8);
        assert!(ps.add("bad", vec![3, 3], Tensor2::zeros(2, 2)).is_err());
    }
}
