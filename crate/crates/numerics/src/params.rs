use std::collections::BTreeMap;

use crate::error::{NumericsError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Named parameter tensors of one model, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Records every parameter as a tracked leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> Bindings {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| (name.clone(), graph.variable(t.clone())))
            .collect();
        Bindings { vars }
    }

    /// Records every parameter as a constant (inference without gradients).
    pub fn bind_frozen(&self, graph: &mut Graph) -> Bindings {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| (name.clone(), graph.constant(t.clone())))
            .collect();
        Bindings { vars }
    }
}

/// Graph handles of a bound [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

impl Bindings {
    /// Bindings over handles the caller already recorded, e.g. to treat
    /// parameters as ordinary inputs of a gradient check.
    pub fn from_vars<S: Into<String>>(vars: impl IntoIterator<Item = (S, Var)>) -> Self {
        Bindings {
            vars: vars.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    /// Gradients of all bound parameters after [`Graph::backward`]; a
    /// parameter the loss does not depend on gets a zero tensor.
    pub fn gradients(&self, graph: &Graph) -> Gradients {
        let tensors = self
            .vars
            .iter()
            .map(|(name, &v)| {
                let g = graph.grad(v).unwrap_or_else(|| Tensor::zeros(graph.shape(v).to_vec()));
                (name.clone(), g)
            })
            .collect();
        Gradients { tensors }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Gradients {
    tensors: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }
}
