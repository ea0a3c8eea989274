//! Reverse-mode automatic differentiation over a small, closed operator set.
//!
//! A [`Graph`] is built once from named placeholders and operators, then
//! evaluated with [`forward`] against concrete bindings. The resulting
//! [`Tape`] runs the reverse pass and hands back gradients for every bound
//! tensor with `requires_grad` set.

mod gradcheck;
mod graph;
mod ops;
mod optim;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport, FD_STEP};
pub use graph::{Graph, Node, NodeId, NodeKind, OpKind};
pub use ops::reverse_gradient;
pub use optim::{sgd_step, ParamSet, SgdState};
pub use scalar::Scalar;
pub use tape::{forward, Bindings, Gradients, Tape};
pub use tensor::{argmax, Tensor};

/// Forward map of the gradient reversal op: the identity.
///
/// Fails for negative `lambda`, mirroring [`Graph::grad_reverse`].
pub fn grad_reverse_apply<T: Scalar>(x: &Tensor<T>, lambda: f64) -> crate::Result<Tensor<T>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(crate::Error::NegativeLambda(lambda));
    }
    Ok(x.clone().with_requires_grad(false))
}
