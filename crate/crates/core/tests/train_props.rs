use idda::autodiff::{forward, Bindings, Graph, NodeId, Tensor};
use idda::data::{gen_two_moons, DomainData, UnlabeledSample};
use idda::model::{build_model, DiscVariant, IddaModel, ModelConfig};
use idda::train::{compose_batch, epoch_plan, Method, PreparedData, TrainConfig, Trainer};
use idda::rng::{self, Stream};
use proptest::prelude::*;
use std::collections::BTreeMap;

const VARIANTS: [DiscVariant; 5] = [
    DiscVariant::Informative,
    DiscVariant::Binary,
    DiscVariant::TwoN,
    DiscVariant::ParentLabel,
    DiscVariant::ConfidenceFiltered { threshold: 0.7 },
];

fn model_config(variant: DiscVariant) -> ModelConfig {
    let cfg = ModelConfig::synthetic(2, variant);
    if variant == DiscVariant::ParentLabel {
        cfg.with_parent_map(vec![0, 0])
    } else {
        cfg
    }
}

fn small_moons(seed: u64) -> DomainData {
    let (source, target) = gen_two_moons(30.0, 48, 40, 0.1, seed).unwrap();
    DomainData { source, target }
}

fn train_cfg(variant: DiscVariant, lambda: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 16,
        lambda,
        learning_rate: 0.01,
        seed,
        method: Method::Adversarial(variant),
        log_target_accuracy: true,
        ..TrainConfig::default()
    }
}

fn trained(data: &DomainData, variant: DiscVariant, seed: u64) -> Trainer {
    let prepared = PreparedData::from_domain(data).unwrap();
    let model = build_model(model_config(variant), seed).unwrap();
    let mut t = Trainer::new(model, train_cfg(variant, 1.0, seed)).unwrap();
    t.run(&prepared).unwrap();
    t
}

fn bits(model: &IddaModel) -> Vec<(String, Vec<u32>)> {
    model
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn with_hidden(data: &DomainData, f: impl Fn(Option<usize>) -> Option<usize>) -> DomainData {
    DomainData {
        source: data.source.clone(),
        target: data
            .target
            .iter()
            .map(|s| UnlabeledSample::new(s.x.clone(), f(s.hidden_label())))
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn hidden_target_labels_never_reach_parameters(seed in 0u64..1000, v in 0usize..VARIANTS.len()) {
        let variant = VARIANTS[v];
        let data = small_moons(seed);
        let reference = bits(&trained(&data, variant, seed).model);
        let zeroed = with_hidden(&data, |y| y.map(|_| 0));
        let stripped = with_hidden(&data, |_| None);
        let flipped = with_hidden(&data, |y| y.map(|y| 1 - y));
        for other in [zeroed, stripped, flipped] {
            prop_assert!(bits(&trained(&other, variant, seed).model) == reference);
        }
    }
}

/// Discriminator loss on one frozen batch, in double precision, with or
/// without a reversal layer between features and discriminator.
struct DiscProbe {
    graph: Graph,
    loss: NodeId,
    bindings: BTreeMap<String, Tensor<f64>>,
}

fn disc_probe(model: &IddaModel, data: &PreparedData, lambda: Option<f64>, seed: u64) -> DiscProbe {
    let mut r = rng::stream(seed, Stream::Batches);
    let idx = &epoch_plan(data.n_source(), data.n_target(), 8, &mut r).unwrap()[0];
    let batch = compose_batch(data, idx).unwrap();
    let labels = idda::train::batch_domain_labels(model, &batch).unwrap();
    let cfg = &model.config;
    let mut g = Graph::new();
    let xs = g.input("xs");
    let fs = cfg.feature_graph(&mut g, xs);
    let xt = g.input("xt");
    let ft = cfg.feature_graph(&mut g, xt);
    let mut f = g.concat(&[fs, ft]);
    if let Some(l) = lambda {
        f = g.grad_reverse(f, l).unwrap();
    }
    let logits = cfg.discriminator_graph(&mut g, f);
    let dl = g.input("dl");
    let loss = g.softmax_cross_entropy(logits, dl);
    let mut bindings: BTreeMap<String, Tensor<f64>> = model
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.cast::<f64>().with_requires_grad(true)))
        .collect();
    bindings.insert("xs".into(), batch.source_x.cast());
    bindings.insert("xt".into(), batch.target_x.cast());
    let dl: Vec<f64> = labels.iter().map(|l| f64::from(l.as_label_value())).collect();
    bindings.insert("dl".into(), Tensor::new([dl.len()], dl).unwrap());
    DiscProbe { graph: g, loss, bindings }
}

impl DiscProbe {
    fn value(&self) -> f64 {
        let b: Bindings<'_, f64> = self.bindings.iter().map(|(k, v)| (k.as_str(), v)).collect();
        forward(&self.graph, &b).unwrap().scalar(self.loss).unwrap()
    }

    fn grads(&self) -> BTreeMap<String, Tensor<f64>> {
        let b: Bindings<'_, f64> = self.bindings.iter().map(|(k, v)| (k.as_str(), v)).collect();
        let mut tape = forward(&self.graph, &b).unwrap();
        let g = tape.backward(self.loss).unwrap();
        g.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }
}

fn setup(seed: u64, v: usize) -> (IddaModel, PreparedData) {
    let variant = VARIANTS[v];
    let data = PreparedData::from_domain(&small_moons(seed)).unwrap();
    (build_model(model_config(variant), seed).unwrap(), data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reversal_flips_and_scales_feature_gradients(seed in 0u64..1000, v in 0usize..VARIANTS.len(), lambda in 0.0..3.0f64) {
        let (model, data) = setup(seed, v);
        let reversed = disc_probe(&model, &data, Some(lambda), seed).grads();
        let plain = disc_probe(&model, &data, None, seed).grads();
        for (name, g) in &reversed {
            let p = &plain[name];
            for (a, b) in g.data().iter().zip(p.data()) {
                if name.starts_with("f.") {
                    prop_assert!((a + lambda * b).abs() <= 1e-12 * (1.0 + b.abs()), "{name}: {a} vs {b}");
                } else {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn discriminator_step_descends(seed in 0u64..1000, v in 0usize..VARIANTS.len()) {
        let (model, data) = setup(seed, v);
        let mut probe = disc_probe(&model, &data, Some(1.0), seed);
        let before = probe.value();
        let grads = probe.grads();
        let norm: f64 = grads.iter().filter(|(n, _)| n.starts_with("d.")).flat_map(|(_, t)| t.data()).map(|v| v * v).sum();
        prop_assume!(norm > 1e-12);
        for (name, g) in grads.iter().filter(|(n, _)| n.starts_with("d.")) {
            let p = probe.bindings.get_mut(name).unwrap();
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= 1e-4 * d;
            }
        }
        prop_assert!(probe.value() < before);
    }

    #[test]
    fn total_loss_combines_terms_on_every_step(seed in 0u64..1000, v in 0usize..VARIANTS.len(), lambda in 0.0..2.0f64) {
        let variant = VARIANTS[v];
        let prepared = PreparedData::from_domain(&small_moons(seed)).unwrap();
        let model = build_model(model_config(variant), seed).unwrap();
        let mut t = Trainer::new(model, train_cfg(variant, lambda, seed)).unwrap();
        t.run(&prepared).unwrap();
        prop_assert!(!t.history.steps.is_empty());
        for s in &t.history.steps {
            let m = &s.metrics;
            prop_assert!((m.total - (m.loss_y + lambda * m.loss_d)).abs() <= 1e-5);
            prop_assert!(m.loss_y >= 0.0 && m.loss_d >= 0.0);
        }
    }
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let data = small_moons(4);
    let prepared = PreparedData::from_domain(&data).unwrap();
    let variant = DiscVariant::Informative;
    let mut cfg = train_cfg(variant, 1.0, 4);
    cfg.epochs = 4;
    let mut full = Trainer::new(build_model(model_config(variant), 4).unwrap(), cfg.clone()).unwrap();
    full.run(&prepared).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    let mut first = Trainer::new(build_model(model_config(variant), 4).unwrap(), cfg).unwrap();
    first.run_epoch(&prepared).unwrap();
    first.run_epoch(&prepared).unwrap();
    first.save_checkpoint(&path).unwrap();
    let mut resumed = Trainer::resume(&path).unwrap();
    resumed.run(&prepared).unwrap();
    assert_eq!(bits(&resumed.model), bits(&full.model));
    assert_eq!(resumed.epoch, 4);
}
