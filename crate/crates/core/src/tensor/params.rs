//! Named learnable parameters with gradient storage.

use super::Tensor;
use crate::error::Error;
use crate::scalar::Scalar;
use crate::Result;
use std::collections::HashMap;

/// One learnable tensor plus its gradient accumulator. Gradients are summed
/// across backward calls; callers reset them explicitly per optimizer step.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Ordered collection of parameters. Registration order is stable and is
/// what the initializer, optimizer and checkpoint writer iterate over.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a parameter; names must be unique within the set.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name: {name}")));
        }
        let slot = self.params.len();
        self.index.insert(name.clone(), slot);
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter { name, value, grad });
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, slot: usize) -> &Parameter<T> {
        &self.params[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Parameter<T> {
        &mut self.params[slot]
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = T::zero();
            }
        }
    }

    /// Total number of scalar elements across all parameters.
    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Canonical byte image of all parameter values (f64 bit patterns in
    /// registration order); used by determinism checks.
    pub fn value_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.element_count() * 8);
        for p in &self.params {
            for v in p.value.data() {
                out.extend_from_slice(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        out
    }
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("w", Tensor::zeros(vec![2, 2])).unwrap();
        assert!(ps.add("w", Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn grad_matches_value_shape() {
        let mut ps = ParamSet::<f32>::new();
        let slot = ps.add("w", Tensor::zeros(vec![3, 4])).unwrap();
        assert_eq!(ps.get(slot).grad.shape(), &[3, 4]);
        assert_eq!(ps.element_count(), 12);
    }
}
