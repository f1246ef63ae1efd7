use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Gradients, Graph, SeqTensor, Var};
use crate::{Error, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Arc<SeqTensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: SeqTensor) {
        self.tensors.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&SeqTensor> {
        self.tensors.get(name).map(|t| &**t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut SeqTensor> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SeqTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), &**v))
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

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }

    /// Registers every tensor as a leaf on `graph`, sharing storage.
    pub fn bind(&self, graph: &mut Graph, requires_grad: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), graph.leaf(Arc::clone(v), requires_grad)))
            .collect();
        BoundParams { vars }
    }
}

/// Graph handles for a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl FromIterator<(String, Var)> for BoundParams {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        BoundParams {
            vars: iter.into_iter().collect(),
        }
    }
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// Collects named gradients after a backward pass.
    pub fn gradients(&self, grads: &Gradients) -> Result<BTreeMap<String, Vec<f64>>> {
        self.vars
            .iter()
            .map(|(k, &v)| Ok((k.clone(), grads.get(v)?.to_vec())))
            .collect()
    }
}
