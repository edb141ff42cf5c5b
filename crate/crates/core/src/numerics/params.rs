//! Named parameter collection with gradient buffers.

use std::collections::HashMap;

use crate::error::{invalid_argument, Result};
use crate::scalar::Scalar;

use super::Matrix;

/// One named tensor with its gradient accumulator and trainability flag.
#[derive(Clone, Debug)]
pub struct Param<S> {
    pub name: String,
    pub value: Matrix<S>,
    pub grad: Matrix<S>,
    pub trainable: bool,
}

/// Ordered collection of named parameters.
///
/// Insertion order is part of the contract: iteration, optimizer steps, and
/// checkpoint serialization all walk parameters in the order they were
/// registered, which keeps every run bit-reproducible.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<S> {
    params: Vec<Param<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new() -> Self {
        ParameterStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a parameter (trainable by default). Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix<S>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(invalid_argument(format!("duplicate parameter `{name}`")));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            grad,
            trainable: true,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameter tensors.
    pub fn total_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param<S>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<S>> {
        let i = *self.index.get(name)?;
        Some(&mut self.params[i])
    }

    /// Value of a parameter that is known to exist; panics otherwise.
    pub fn value(&self, name: &str) -> &Matrix<S> {
        &self
            .get(name)
            .unwrap_or_else(|| panic!("unregistered parameter `{name}`"))
            .value
    }

    /// Gradient accumulator of a known parameter; panics otherwise.
    pub fn grad_mut(&mut self, name: &str) -> &mut Matrix<S> {
        &mut self
            .get_mut(name)
            .unwrap_or_else(|| panic!("unregistered parameter `{name}`"))
            .grad
    }

    /// Parameter at a store index (insertion order).
    pub fn param(&self, i: usize) -> &Param<S> {
        &self.params[i]
    }

    /// Mutable parameter at a store index (insertion order).
    pub fn param_mut(&mut self, i: usize) -> &mut Param<S> {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    /// Clears every gradient buffer.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(S::zero());
        }
    }

    /// Marks each parameter trainable iff `pred(name)` holds.
    pub fn set_trainable_where(&mut self, pred: impl Fn(&str) -> bool) {
        for p in &mut self.params {
            p.trainable = pred(&p.name);
        }
    }

    /// Copies all parameter values (not gradients), in store order.
    pub fn snapshot(&self) -> Vec<Matrix<S>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Restores values from a [`snapshot`](Self::snapshot) of this store.
    pub fn restore(&mut self, snapshot: &[Matrix<S>]) {
        assert_eq!(
            snapshot.len(),
            self.params.len(),
            "snapshot does not match store layout"
        );
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            assert_eq!(p.value.shape(), v.shape());
            p.value = v.clone();
        }
    }
}
