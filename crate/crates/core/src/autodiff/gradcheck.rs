//! Central finite-difference gradient checking in double precision.

use std::collections::BTreeMap;

use super::ops::reverse_gradient;
use super::{forward, Bindings, Graph, NodeId, NodeKind, OpKind, Tensor};
use crate::error::Result;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error between analytic and finite-difference gradients,
    /// with gradient reversal evaluated as the gradient of its forward map.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked_values: usize,
    /// Number of gradient-reversal nodes in the graph.
    pub reversal_nodes: usize,
    /// Whether every reversal node maps its recorded upstream gradient `g` to `-lambda * g`.
    pub reversal_contract_holds: bool,
    /// Max relative error of the declared (reversed) gradients against finite
    /// differences. Large whenever the graph contains a reversal with lambda != 1.
    pub declared_max_rel_error: f64,
    /// Least-squares ratio `<declared, fd> / <fd, fd>`; equals `-lambda` when
    /// every path to the loss passes through one reversal of strength `lambda`.
    pub declared_to_fd_ratio: f64,
    pub passed: bool,
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients of scalar node `loss` with central differences
/// for every bound tensor that requires a gradient.
pub fn gradient_check(
    graph: &Graph,
    bindings: &BTreeMap<String, Tensor<f64>>,
    loss: NodeId,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let b: Bindings<'_, f64> = bindings.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let mut tape = forward(graph, &b)?;
    let value_grads = tape.run_backward(&[(loss, 1.0)], true)?;

    let mut tape = forward(graph, &b)?;
    let declared = tape.backward(loss)?;

    let mut reversal_nodes = 0;
    let mut contract = true;
    for (i, node) in graph.nodes().iter().enumerate() {
        if let NodeKind::Op(OpKind::GradReverse { lambda }) = &node.kind {
            reversal_nodes += 1;
            if let Some(up) = tape.node_grad(NodeId(i)) {
                let mapped = reverse_gradient(up, *lambda);
                let exact = mapped
                    .data()
                    .iter()
                    .zip(up.data())
                    .all(|(m, u)| *m == -*lambda * *u);
                contract &= exact;
            }
        }
    }

    let mut work = bindings.clone();
    let mut max_rel = 0.0f64;
    let mut declared_max_rel = 0.0f64;
    let mut dot_df = 0.0;
    let mut dot_ff = 0.0;
    let mut checked = 0;
    for (name, grad) in value_grads.iter() {
        let declared_grad = declared.get(name).expect("same inputs differentiated");
        for k in 0..grad.len() {
            let orig = work[name].data()[k];
            work.get_mut(name).unwrap().data_mut()[k] = orig + FD_STEP;
            let plus = eval(graph, &work, loss)?;
            work.get_mut(name).unwrap().data_mut()[k] = orig - FD_STEP;
            let minus = eval(graph, &work, loss)?;
            work.get_mut(name).unwrap().data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grad.data()[k];
            let decl = declared_grad.data()[k];
            max_rel = max_rel.max(rel_error(analytic, fd));
            declared_max_rel = declared_max_rel.max(rel_error(decl, fd));
            dot_df += decl * fd;
            dot_ff += fd * fd;
            checked += 1;
        }
    }
    let ratio = if dot_ff > 0.0 { dot_df / dot_ff } else { 0.0 };
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        tolerance,
        checked_values: checked,
        reversal_nodes,
        reversal_contract_holds: contract,
        declared_max_rel_error: declared_max_rel,
        declared_to_fd_ratio: ratio,
        passed: max_rel <= tolerance && contract,
    })
}

fn eval(graph: &Graph, bindings: &BTreeMap<String, Tensor<f64>>, loss: NodeId) -> Result<f64> {
    let b: Bindings<'_, f64> = bindings.iter().map(|(k, v)| (k.as_str(), v)).collect();
    forward(graph, &b)?.scalar(loss)
}
