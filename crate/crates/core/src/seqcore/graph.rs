use std::sync::Arc;

use super::SeqTensor;
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// What a backward rule sees for one node.
pub struct BackwardCtx<'a> {
    pub inputs: Vec<&'a SeqTensor>,
    pub output: &'a SeqTensor,
    /// Upstream gradient, same length as `output`.
    pub grad: &'a [f64],
    /// Which inputs need a gradient; rules may skip the others.
    pub needs: Vec<bool>,
}

/// Returns one gradient per input (`None` for inputs that need none).
pub type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Arc<SeqTensor>,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Append-only tape. Nodes are stored in creation order, which is a
/// topological order of the computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: impl Into<Arc<SeqTensor>>) -> Var {
        self.push_leaf(value.into(), true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: impl Into<Arc<SeqTensor>>) -> Var {
        self.push_leaf(value.into(), false)
    }

    pub fn leaf(&mut self, value: impl Into<Arc<SeqTensor>>, requires_grad: bool) -> Var {
        self.push_leaf(value.into(), requires_grad)
    }

    fn push_leaf(&mut self, value: Arc<SeqTensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &SeqTensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a primitive. The backward rule is dropped when no input
    /// needs a gradient.
    pub fn push_op(&mut self, inputs: &[Var], value: SeqTensor, backward: BackwardFn) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            inputs: inputs.iter().map(|v| v.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: root.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(rule) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|&i| &*self.nodes[i].value).collect(),
                output: &node.value,
                grad: &g,
                needs: node
                    .inputs
                    .iter()
                    .map(|&i| self.nodes[i].requires_grad)
                    .collect(),
            };
            let input_grads = rule(&ctx);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (&input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(ig),
                }
            }
        }

        let leaf_grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(n, g)| {
                if n.backward.is_none() && n.inputs.is_empty() && n.requires_grad {
                    Some(g.unwrap_or_else(|| vec![0.0; n.value.len()]))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { grads: leaf_grads })
    }
}

/// Gradients of a scalar with respect to every grad-requiring leaf.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Result<&[f64]> {
        self.grads
            .get(leaf.0)
            .and_then(|g| g.as_deref())
            .ok_or(Error::DetachedLeaf { node: leaf.0 })
    }
}
