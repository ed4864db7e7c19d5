use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tensor::numel;
use super::{Scalar, Tensor};
use crate::error::{invalid, Result};

/// One named trainable array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of named parameters.
///
/// Insertion order is the canonical order used by optimizers and
/// checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], data: Vec<T>) -> Result<()> {
        if numel(shape) != data.len() {
            return Err(invalid(alloc::format!("parameter `{name}`: shape {shape:?} vs {} values", data.len())));
        }
        if self.index.contains_key(name) {
            return Err(invalid(alloc::format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Wraps every parameter in a tensor for one forward pass.
    pub fn bind(&self, requires_grad: bool) -> Bound<T> {
        let tensors = self
            .params
            .iter()
            .map(|p| {
                if requires_grad {
                    Tensor::param(&p.shape, p.data.clone())
                } else {
                    Tensor::new(&p.shape, p.data.clone())
                }
                .expect("parameter shape checked on insert")
            })
            .collect();
        Bound {
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            index: self.index.clone(),
            tensors,
        }
    }

    /// Converts every value to another precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Parameters bound as tensors for one forward/backward pass.
pub struct Bound<T: Scalar> {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Bound<T> {
    /// Binds explicit tensors, e.g. perturbed copies during gradient checks.
    pub fn from_tensors(names: Vec<String>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(invalid("one name per tensor required"));
        }
        let mut index = BTreeMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(invalid(alloc::format!("duplicate parameter `{n}`")));
            }
        }
        Ok(Bound { names, index, tensors })
    }

    /// Tensor for `name`; panics if the model asks for an unknown parameter,
    /// which is a construction bug rather than a data error.
    pub fn get(&self, name: &str) -> &Tensor<T> {
        match self.index.get(name) {
            Some(&i) => &self.tensors[i],
            None => panic!("unknown parameter `{name}`"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    /// Gradients in store order.
    pub fn grads(&self) -> Vec<Option<Vec<T>>> {
        self.tensors.iter().map(|t| t.grad()).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }
}
