use std::fmt;

use crate::error::{Error, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The differentiable operators the engine supports.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `[m, k] x [k, n] -> [m, n]`.
    MatMul,
    /// Adds a `[F]` bias along axis 1 of a `[N, F, ...]` tensor.
    AddBias,
    Relu,
    /// `[N, C, H, W]` input with `[O, C, KH, KW]` kernel, symmetric zero padding.
    Conv2d { stride: usize, padding: usize },
    MaxPool2d { kernel: usize, stride: usize },
    /// `[N, ...] -> [N, prod(...)]`.
    Flatten,
    /// Mean cross-entropy of `[N, C]` logits against a `[N]` label tensor.
    ///
    /// Labels hold class indices as floats; negative labels mark rows that
    /// are excluded from the mean.
    SoftmaxCrossEntropy,
    /// Identity forward; backward multiplies the upstream gradient by `-lambda`.
    GradReverse { lambda: f64 },
    /// Concatenation along axis 0.
    Concat,
    Scale(f64),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::AddBias => "add_bias",
            OpKind::Relu => "relu",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::MaxPool2d { .. } => "max_pool2d",
            OpKind::Flatten => "flatten",
            OpKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            OpKind::GradReverse { .. } => "grad_reverse",
            OpKind::Concat => "concat",
            OpKind::Scale(_) => "scale",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    /// Named placeholder, bound at [`forward`](super::forward) time.
    Input(String),
    Op(OpKind),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
}

/// Static computation graph.
///
/// Nodes can only refer to nodes created before them, so the graph is
/// acyclic by construction and node order is a valid evaluation order.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Placeholder named `name`. Asking twice for the same name returns the
    /// same node, which is how parameters are shared between branches.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(i) = self
            .nodes
            .iter()
            .position(|n| matches!(&n.kind, NodeKind::Input(s) if s == name))
        {
            return NodeId(i);
        }
        self.push(NodeKind::Input(name.to_string()), vec![])
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            NodeKind::Input(s) => Some(s.as_str()),
            NodeKind::Op(_) => None,
        })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(OpKind::MatMul, vec![a, b])
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.op(OpKind::AddBias, vec![x, bias])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.op(OpKind::Relu, vec![x])
    }

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId, stride: usize, padding: usize) -> NodeId {
        assert!(stride > 0, "conv2d stride must be positive");
        self.op(OpKind::Conv2d { stride, padding }, vec![x, kernel])
    }

    pub fn max_pool2d(&mut self, x: NodeId, kernel: usize, stride: usize) -> NodeId {
        assert!(kernel > 0 && stride > 0, "pooling window must be positive");
        self.op(OpKind::MaxPool2d { kernel, stride }, vec![x])
    }

    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        self.op(OpKind::Flatten, vec![x])
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: NodeId) -> NodeId {
        self.op(OpKind::SoftmaxCrossEntropy, vec![logits, labels])
    }

    pub fn grad_reverse(&mut self, x: NodeId, lambda: f64) -> Result<NodeId> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::NegativeLambda(lambda));
        }
        Ok(self.op(OpKind::GradReverse { lambda }, vec![x]))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat needs at least one input");
        self.op(OpKind::Concat, parts.to_vec())
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.op(OpKind::Scale(factor), vec![x])
    }

    /// Dense layer `x W + b` using parameters `<prefix>.weight` and `<prefix>.bias`.
    pub fn dense(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let w = self.input(&format!("{prefix}.weight"));
        let b = self.input(&format!("{prefix}.bias"));
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    fn op(&mut self, kind: OpKind, inputs: Vec<NodeId>) -> NodeId {
        self.push(NodeKind::Op(kind), inputs)
    }

    fn push(&mut self, kind: NodeKind, inputs: Vec<NodeId>) -> NodeId {
        for i in &inputs {
            assert!(i.0 < self.nodes.len(), "node {} is not part of this graph", i.0);
        }
        self.nodes.push(Node { kind, inputs });
        NodeId(self.nodes.len() - 1)
    }
}
