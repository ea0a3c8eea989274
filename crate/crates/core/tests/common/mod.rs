//! Random differentiable graphs shared by the gradient tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use idda::autodiff::{forward, Bindings, Graph, NodeId, NodeKind, OpKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Finite differences are meaningless within this distance of a relu hinge
/// or a max-pool tie.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Focus {
    MatMul,
    AddBias,
    Relu,
    Conv2d,
    MaxPool2d,
    Flatten,
    SoftmaxCrossEntropy,
    Concat,
    Scale,
}

impl Focus {
    pub const ALL: [Focus; 9] = [
        Focus::MatMul,
        Focus::AddBias,
        Focus::Relu,
        Focus::Conv2d,
        Focus::MaxPool2d,
        Focus::Flatten,
        Focus::SoftmaxCrossEntropy,
        Focus::Concat,
        Focus::Scale,
    ];
}

pub struct Case {
    pub graph: Graph,
    pub bindings: BTreeMap<String, Tensor<f64>>,
    pub loss: NodeId,
}

struct Builder {
    rng: ChaCha8Rng,
    graph: Graph,
    bindings: BTreeMap<String, Tensor<f64>>,
    next: usize,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            graph: Graph::new(),
            bindings: BTreeMap::new(),
            next: 0,
        }
    }

    fn param(&mut self, shape: &[usize], scale: f64) -> NodeId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-scale..scale)).collect();
        let name = format!("p{}", self.next);
        self.next += 1;
        let t = Tensor::new(shape.to_vec(), data).unwrap().with_requires_grad(true);
        self.bindings.insert(name.clone(), t);
        self.graph.input(&name)
    }

    fn dense(&mut self, x: NodeId, fin: usize, fout: usize) -> NodeId {
        let w = self.param(&[fin, fout], 1.0);
        let b = self.param(&[fout], 0.5);
        let y = self.graph.matmul(x, w);
        self.graph.add_bias(y, b)
    }

    /// Randomly appends relu / scale / dense layers to a `[n, f]` node.
    fn tail(&mut self, mut x: NodeId, mut f: usize) -> (NodeId, usize) {
        for _ in 0..self.rng.random_range(0..3) {
            match self.rng.random_range(0..3) {
                0 => x = self.graph.relu(x),
                1 => {
                    let s = self.rng.random_range(-2.0..2.0);
                    x = self.graph.scale(x, s);
                }
                _ => {
                    let fout = self.rng.random_range(2..5);
                    x = self.dense(x, f, fout);
                    f = fout;
                }
            }
        }
        (x, f)
    }

    fn loss(mut self, logits: NodeId, n: usize, f: usize) -> Case {
        let classes = self.rng.random_range(2..5);
        let z = self.dense(logits, f, classes);
        let mut labels: Vec<f64> = (0..n).map(|_| self.rng.random_range(0..classes) as f64).collect();
        for l in labels.iter_mut().skip(1) {
            if self.rng.random_bool(0.2) {
                *l = -1.0;
            }
        }
        self.bindings.insert("labels".into(), Tensor::new([n], labels).unwrap());
        let y = self.graph.input("labels");
        let loss = self.graph.softmax_cross_entropy(z, y);
        Case {
            graph: self.graph,
            bindings: self.bindings,
            loss,
        }
    }
}

pub fn random_case(focus: Focus, seed: u64) -> Case {
    let mut b = Builder::new(seed);
    let n = b.rng.random_range(1..5);
    let f = b.rng.random_range(2..5);
    match focus {
        Focus::MatMul | Focus::AddBias | Focus::Relu | Focus::Scale => {
            let x = b.param(&[n, f], 1.0);
            let fout = b.rng.random_range(2..5);
            let w = b.param(&[f, fout], 1.0);
            let mut h = b.graph.matmul(x, w);
            if matches!(focus, Focus::AddBias) || b.rng.random_bool(0.5) {
                let bias = b.param(&[fout], 0.5);
                h = b.graph.add_bias(h, bias);
            }
            if matches!(focus, Focus::Relu) {
                h = b.graph.relu(h);
            }
            if matches!(focus, Focus::Scale) {
                let s = b.rng.random_range(-3.0..3.0);
                h = b.graph.scale(h, s);
            }
            let (h, f) = b.tail(h, fout);
            b.loss(h, n, f)
        }
        Focus::Conv2d | Focus::MaxPool2d | Focus::Flatten => {
            let c = b.rng.random_range(1..3);
            let side = b.rng.random_range(4..7);
            let x = b.param(&[n, c, side, side], 1.0);
            let mut h = x;
            let (mut ch, mut hs) = (c, side);
            if matches!(focus, Focus::Conv2d) || b.rng.random_bool(0.5) {
                let o = b.rng.random_range(1..4);
                let k = b.rng.random_range(1..4);
                let stride = b.rng.random_range(1..3);
                let pad = b.rng.random_range(0..2);
                let w = b.param(&[o, ch, k, k], 1.0);
                h = b.graph.conv2d(h, w, stride, pad);
                if b.rng.random_bool(0.5) {
                    let bias = b.param(&[o], 0.5);
                    h = b.graph.add_bias(h, bias);
                }
                ch = o;
                hs = (hs + 2 * pad - k) / stride + 1;
            }
            if matches!(focus, Focus::MaxPool2d) || (hs >= 2 && b.rng.random_bool(0.5)) {
                let k = b.rng.random_range(1..=hs.min(3));
                let stride = b.rng.random_range(1..3);
                h = b.graph.max_pool2d(h, k, stride);
                hs = (hs - k) / stride + 1;
            }
            let flat = b.graph.flatten(h);
            let (h, f) = b.tail(flat, ch * hs * hs);
            b.loss(h, n, f)
        }
        Focus::SoftmaxCrossEntropy => {
            let x = b.param(&[n, f], 2.0);
            let (h, f) = b.tail(x, f);
            b.loss(h, n, f)
        }
        Focus::Concat => {
            let parts = b.rng.random_range(2..4);
            let mut nodes = Vec::new();
            let mut rows = 0;
            let w = b.param(&[f, f], 1.0);
            for _ in 0..parts {
                let r = b.rng.random_range(1..3);
                let x = b.param(&[r, f], 1.0);
                nodes.push(if b.rng.random_bool(0.5) { b.graph.matmul(x, w) } else { x });
                rows += r;
            }
            let cat = b.graph.concat(&nodes);
            let (h, f) = b.tail(cat, f);
            b.loss(h, rows, f)
        }
    }
}

/// Smallest distance of any relu input to zero, or of any pooling window's
/// maximum to its runner-up.
pub fn kink_distance(case: &Case) -> f64 {
    let b: Bindings<'_, f64> = case.bindings.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let tape = forward(&case.graph, &b).unwrap();
    let mut d = f64::INFINITY;
    for node in case.graph.nodes() {
        match &node.kind {
            NodeKind::Op(OpKind::Relu) => {
                for v in tape.value(node.inputs[0]).data() {
                    d = d.min(v.abs());
                }
            }
            NodeKind::Op(OpKind::MaxPool2d { kernel, stride }) => {
                let x = tape.value(node.inputs[0]);
                let &[n, c, h, w] = x.shape() else { unreachable!() };
                let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
                for plane in 0..n * c {
                    let p = &x.data()[plane * h * w..(plane + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut vals: Vec<f64> = (0..*kernel)
                                .flat_map(|a| (0..*kernel).map(move |bb| (a, bb)))
                                .map(|(a, bb)| p[(i * stride + a) * w + j * stride + bb])
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            if vals.len() > 1 {
                                d = d.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    d
}
