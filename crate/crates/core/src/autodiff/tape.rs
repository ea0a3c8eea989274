use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::ops::{self, Saved};
use super::{Graph, NodeId, NodeKind, Scalar, Tensor};
use crate::error::{Error, Result};

/// Placeholder name to bound tensor.
pub type Bindings<'a, T> = HashMap<&'a str, &'a Tensor<T>>;

/// Gradients of a scalar with respect to every bound tensor that has
/// `requires_grad` set, keyed by placeholder name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor<T>) {
        self.map.insert(name.into(), grad);
    }

    /// Euclidean norm over every gradient value.
    pub fn global_norm(&self) -> f64 {
        self.map
            .values()
            .flat_map(|t| t.data())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales every gradient so the global norm is at most `max_norm`.
    /// Returns the norm before rescaling.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            let k = T::from_f64_lossy(max_norm / norm);
            for t in self.map.values_mut() {
                t.data_mut().iter_mut().for_each(|v| *v = *v * k);
            }
        }
        norm
    }
}

/// Values recorded by one forward evaluation of a [`Graph`].
pub struct Tape<'a, T: Scalar> {
    graph: &'a Graph,
    values: Vec<Cow<'a, Tensor<T>>>,
    saved: Vec<Saved<T>>,
    node_grads: Vec<Option<Tensor<T>>>,
    consumed: bool,
}

/// Evaluates every node of `graph` in creation order.
pub fn forward<'a, T: Scalar>(graph: &'a Graph, bindings: &Bindings<'a, T>) -> Result<Tape<'a, T>> {
    let mut values: Vec<Cow<'a, Tensor<T>>> = Vec::with_capacity(graph.len());
    let mut saved = Vec::with_capacity(graph.len());
    for (idx, node) in graph.nodes().iter().enumerate() {
        match &node.kind {
            NodeKind::Input(name) => {
                let t = bindings
                    .get(name.as_str())
                    .ok_or_else(|| Error::UnboundPlaceholder(name.clone()))?;
                values.push(Cow::Borrowed(*t));
                saved.push(Saved::Nothing);
            }
            NodeKind::Op(op) => {
                let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|i| values[i.0].as_ref()).collect();
                let (out, s) = ops::forward(op, &inputs)?;
                if !out.all_finite() {
                    return Err(Error::NonFinite {
                        node: idx,
                        op: op.name().to_string(),
                    });
                }
                values.push(Cow::Owned(out));
                saved.push(s);
            }
        }
    }
    Ok(Tape {
        graph,
        values,
        saved,
        node_grads: Vec::new(),
        consumed: false,
    })
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn value(&self, node: NodeId) -> &Tensor<T> {
        &self.values[node.0]
    }

    /// Value of the most recently created node.
    pub fn output(&self) -> &Tensor<T> {
        self.values.last().expect("graph has at least one node")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, node: NodeId) -> Result<T> {
        let t = self.value(node);
        t.item().ok_or_else(|| Error::NonScalarLoss(t.shape().to_vec()))
    }

    /// Gradient accumulated at an intermediate node by the last backward pass.
    pub fn node_grad(&self, node: NodeId) -> Option<&Tensor<T>> {
        self.node_grads.get(node.0).and_then(Option::as_ref)
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Reverse pass from a scalar loss; the tape cannot be reused afterwards.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<T>> {
        self.backward_weighted(&[(loss, T::one())])
    }

    /// Reverse pass for the weighted sum `sum_i w_i * roots_i` of scalar nodes.
    pub fn backward_weighted(&mut self, roots: &[(NodeId, T)]) -> Result<Gradients<T>> {
        self.run_backward(roots, false)
    }

    pub(crate) fn run_backward(&mut self, roots: &[(NodeId, T)], reversal_as_identity: bool) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        for (root, _) in roots {
            let shape = self.values[root.0].shape();
            if self.values[root.0].len() != 1 {
                return Err(Error::NonScalarLoss(shape.to_vec()));
            }
        }
        let nodes = self.graph.nodes();
        let mut needs = vec![false; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            needs[i] = match &node.kind {
                NodeKind::Input(_) => self.values[i].requires_grad(),
                NodeKind::Op(op) => {
                    let differentiable = match op {
                        super::OpKind::SoftmaxCrossEntropy => &node.inputs[..1],
                        _ => &node.inputs[..],
                    };
                    differentiable.iter().any(|j| needs[j.0])
                }
            };
        }

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        for &(root, weight) in roots {
            let seed = Tensor::new(self.values[root.0].shape(), vec![weight])?;
            accumulate(&mut grads[root.0], seed);
        }
        for i in (0..nodes.len()).rev() {
            let NodeKind::Op(op) = &nodes[i].kind else {
                continue;
            };
            if !needs[i] {
                continue;
            }
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            let input_needs: Vec<bool> = node
                .inputs
                .iter()
                .enumerate()
                .map(|(k, j)| needs[j.0] && !(matches!(op, super::OpKind::SoftmaxCrossEntropy) && k == 1))
                .collect();
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|j| self.values[j.0].as_ref()).collect();
            let input_grads = ops::backward(op, &inputs, &self.saved[i], &upstream, &input_needs, reversal_as_identity)?;
            for (j, g) in node.inputs.iter().zip(input_grads) {
                if let Some(g) = g {
                    accumulate(&mut grads[j.0], g);
                }
            }
            grads[i] = Some(upstream);
        }

        let mut out = Gradients::default();
        for (i, node) in nodes.iter().enumerate() {
            if let NodeKind::Input(name) = &node.kind {
                if needs[i] {
                    let g = match &grads[i] {
                        Some(g) => g.clone(),
                        None => Tensor::zeros(self.values[i].shape())?,
                    };
                    out.insert(name.clone(), g);
                }
            }
        }
        // Intermediates needed only by backward are released.
        for s in &mut self.saved {
            *s = Saved::Nothing;
        }
        self.node_grads = grads;
        self.consumed = true;
        Ok(out)
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
    }
}
