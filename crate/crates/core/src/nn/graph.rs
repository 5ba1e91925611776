//! Tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value, its parent node
//! ids and a closure mapping the output gradient to parent gradients. Nodes
//! are appended in evaluation order, so walking the tape backwards visits
//! every node after all of its consumers.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Maps (parent values, output value, output gradient) to one optional
/// gradient per parent.
pub type BackwardFn = Box<dyn Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    /// A differentiable input (parameter or probed input).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, true)
    }

    pub(crate) fn record(&mut self, value: Tensor, parents: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let backward = requires_grad.then_some(backward);
        self.push(value, parents.iter().map(|p| p.0).collect(), backward, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be a scalar, got shape {:?}", self.nodes[root.0].value.shape),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let parent_grads = backward(&inputs, &node.value, &g);
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of the leaves reached from a backward root.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
