use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Bindings, Gradients, Scalar, Tensor};
use crate::error::{Error, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<T = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name.into(), tensor.with_requires_grad(true));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
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

    /// Parameters whose name starts with `prefix`.
    pub fn with_prefix<'s>(&'s self, prefix: &'s str) -> impl Iterator<Item = (&'s str, &'s Tensor<T>)> + 's {
        self.iter().filter(move |(k, _)| k.starts_with(prefix))
    }

    /// Adds every parameter to `bindings`.
    pub fn bind<'a>(&'a self, bindings: &mut Bindings<'a, T>) {
        for (k, v) in &self.tensors {
            bindings.insert(k.as_str(), v);
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }
}

/// Momentum SGD: `v <- momentum * v + g; p <- p - lr * v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdState<T = f32> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: BTreeMap::new(),
        })
    }
}

/// Applies one update to every parameter. A parameter without a gradient is
/// treated as having a zero gradient.
pub fn sgd_step<T: Scalar>(params: &mut ParamSet<T>, grads: &Gradients<T>, state: &mut SgdState<T>) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params
            .get(name)
            .ok_or_else(|| Error::shape("sgd_step", format!("gradient for unknown parameter `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "sgd_step",
                format!("`{name}`: parameter {:?}, gradient {:?}", p.shape(), g.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    let lr = T::from_f64_lossy(state.learning_rate);
    let mu = T::from_f64_lossy(state.momentum);
    for (name, p) in params.tensors.iter_mut() {
        let grad = grads.get(name);
        let v = match state.velocity.get_mut(name) {
            Some(v) => v,
            None => {
                if grad.is_none() {
                    continue;
                }
                state
                    .velocity
                    .entry(name.clone())
                    .or_insert(Tensor::zeros(p.shape())?)
            }
        };
        if v.shape() != p.shape() {
            return Err(Error::shape("sgd_step", format!("velocity of `{name}` has wrong shape")));
        }
        match grad {
            Some(g) => {
                for (vi, &gi) in v.data_mut().iter_mut().zip(g.data()) {
                    *vi = mu * *vi + gi;
                }
            }
            None => {
                for vi in v.data_mut() {
                    *vi = mu * *vi;
                }
            }
        }
        for (pi, &vi) in p.data_mut().iter_mut().zip(v.data()) {
            *pi = *pi - lr * vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.insert("p", Tensor::scalar(p));
        ps
    }

    fn grad(g: f64) -> Gradients<f64> {
        let mut gs = Gradients::default();
        gs.insert("p", Tensor::scalar(g));
        gs
    }

    #[test]
    fn plain_step() {
        let mut ps = single(1.0);
        let mut st = SgdState::new(0.1, 0.0).unwrap();
        sgd_step(&mut ps, &grad(0.5), &mut st).unwrap();
        assert!((ps.get("p").unwrap().data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut ps = single(0.0);
        let mut st = SgdState::new(0.1, 0.9).unwrap();
        sgd_step(&mut ps, &grad(1.0), &mut st).unwrap();
        let after_one = ps.get("p").unwrap().data()[0];
        assert!((after_one + 0.1).abs() < 1e-15);
        sgd_step(&mut ps, &grad(1.0), &mut st).unwrap();
        let after_two = ps.get("p").unwrap().data()[0];
        assert!((after_one - after_two - 0.19).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut ps = single(0.3);
        let mut st = SgdState::new(0.1, 0.9).unwrap();
        sgd_step(&mut ps, &grad(0.0), &mut st).unwrap();
        assert_eq!(ps.get("p").unwrap().data()[0], 0.3);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut ps = single(0.3);
        let mut st = SgdState::new(0.1, 0.9).unwrap();
        assert!(matches!(
            sgd_step(&mut ps, &grad(f64::NAN), &mut st),
            Err(Error::NonFiniteGradient(_))
        ));
        let mut gs = Gradients::default();
        gs.insert("p", Tensor::<f64>::zeros([2]).unwrap());
        assert!(matches!(sgd_step(&mut ps, &gs, &mut st), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(SgdState::<f32>::new(0.0, 0.5).is_err());
        assert!(SgdState::<f32>::new(0.1, 1.0).is_err());
    }
}
