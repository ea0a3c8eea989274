mod common;

use std::collections::BTreeMap;

use common::{kink_distance, random_case, Focus, KINK_MARGIN};
use idda::autodiff::{forward, gradient_check, reverse_gradient, Bindings, Graph, NodeId, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn check(focus: Focus, seed: u64) -> Result<(), TestCaseError> {
    let case = random_case(focus, seed);
    prop_assume!(kink_distance(&case) > KINK_MARGIN);
    let report = gradient_check(&case.graph, &case.bindings, case.loss, TOL).unwrap();
    prop_assert!(report.checked_values > 0);
    prop_assert!(
        report.passed,
        "{focus:?} seed {seed}: max relative error {}",
        report.max_rel_error
    );
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matmul_gradients(seed in any::<u64>()) { check(Focus::MatMul, seed)?; }

    #[test]
    fn add_bias_gradients(seed in any::<u64>()) { check(Focus::AddBias, seed)?; }

    #[test]
    fn relu_gradients(seed in any::<u64>()) { check(Focus::Relu, seed)?; }

    #[test]
    fn conv2d_gradients(seed in any::<u64>()) { check(Focus::Conv2d, seed)?; }

    #[test]
    fn max_pool2d_gradients(seed in any::<u64>()) { check(Focus::MaxPool2d, seed)?; }

    #[test]
    fn flatten_gradients(seed in any::<u64>()) { check(Focus::Flatten, seed)?; }

    #[test]
    fn softmax_cross_entropy_gradients(seed in any::<u64>()) { check(Focus::SoftmaxCrossEntropy, seed)?; }

    #[test]
    fn concat_gradients(seed in any::<u64>()) { check(Focus::Concat, seed)?; }

    #[test]
    fn scale_gradients(seed in any::<u64>()) { check(Focus::Scale, seed)?; }
}

/// `x -> GRL(lambda) -> dense -> cross-entropy`, returning the GRL node too.
fn reversal_graph(lambda: f64) -> (Graph, NodeId, NodeId, NodeId) {
    let mut g = Graph::new();
    let x = g.input("x");
    let r = g.grad_reverse(x, lambda).unwrap();
    let h = g.dense(r, "d");
    let y = g.input("y");
    let loss = g.softmax_cross_entropy(h, y);
    (g, x, r, loss)
}

fn reversal_bindings(seed: u64) -> BTreeMap<String, Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let mut m = BTreeMap::new();
    m.insert("x".into(), Tensor::new([3, 4], v(12)).unwrap().with_requires_grad(true));
    m.insert("d.weight".into(), Tensor::new([4, 3], v(12)).unwrap().with_requires_grad(true));
    m.insert("d.bias".into(), Tensor::new([3], v(3)).unwrap().with_requires_grad(true));
    m.insert("y".into(), Tensor::new([3], vec![0.0, 2.0, 1.0]).unwrap());
    m
}

fn lambda_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.4), Just(1.0), Just(2.0), 0.0..5.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversal_forward_is_identity_and_backward_negates(lambda in lambda_strategy(), seed in any::<u64>()) {
        let (g, x, r, loss) = reversal_graph(lambda);
        let owned = reversal_bindings(seed);
        let b: Bindings<'_, f64> = owned.iter().map(|(k, v)| (k.as_str(), v)).collect();
        let mut tape = forward(&g, &b).unwrap();
        prop_assert_eq!(tape.value(r).data(), tape.value(x).data());
        let grads = tape.backward(loss).unwrap();
        let up = tape.node_grad(r).unwrap();
        let gx = grads.get("x").unwrap();
        for (a, u) in gx.data().iter().zip(up.data()) {
            prop_assert_eq!(a.to_bits(), (-lambda * u).to_bits());
        }
        let report = gradient_check(&g, &owned, loss, TOL).unwrap();
        prop_assert!(report.reversal_contract_holds);
        prop_assert!(report.passed);
    }

    #[test]
    fn reversal_is_linear_in_lambda(lambda in 0.0..4.0f64, k in 0.0..3.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let up = Tensor::new([2, 3], (0..6).map(|_| rng.random_range(-1.0..1.0f64)).collect()).unwrap();
        let a = reverse_gradient(&up, lambda);
        let b = reverse_gradient(&up, k * lambda);
        for ((a, b), u) in a.data().iter().zip(b.data()).zip(up.data()) {
            prop_assert_eq!(*a, -lambda * u);
            prop_assert!((b - k * a).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let up32 = up.cast::<f32>();
        let r32 = reverse_gradient(&up32, lambda);
        for (r, u) in r32.data().iter().zip(up32.data()) {
            prop_assert_eq!(r.to_bits(), (-(lambda as f32) * u).to_bits());
        }
    }
}

#[test]
fn declared_gradient_is_minus_lambda_times_true_gradient() {
    for lambda in [0.0, 0.1, 0.4, 0.7, 1.0, 1.4, 1.7, 2.0] {
        let (g, _, _, loss) = reversal_graph(lambda);
        let mut b = reversal_bindings(3);
        for name in ["d.weight", "d.bias"] {
            let t = b[name].clone().with_requires_grad(false);
            b.insert(name.into(), t);
        }
        let report = gradient_check(&g, &b, loss, TOL).unwrap();
        assert_eq!(report.reversal_nodes, 1);
        assert!((report.declared_to_fd_ratio + lambda).abs() < 1e-6, "lambda {lambda}");
    }
}

#[test]
fn negative_lambda_is_rejected() {
    let mut g = Graph::new();
    let x = g.input("x");
    assert!(g.grad_reverse(x, -0.1).is_err());
    assert!(g.grad_reverse(x, f64::NAN).is_err());
}
