//! Feature extractor, label classifier and domain discriminator.
//!
//! Parameters live in one [`ParamSet`] with the prefixes `f.` (feature
//! extractor), `c.` (classifier) and `d.` (discriminator).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, forward, Bindings, Graph, NodeId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Rows per forward pass during inference.
const INFERENCE_CHUNK: usize = 256;

/// What the discriminator is asked to predict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscVariant {
    /// `C + 1` outputs: source rows carry their class, target rows the extra fake class.
    Informative,
    /// Source vs. target.
    Binary,
    /// `2C` outputs: target rows use `C + argmax` of the classifier prediction.
    TwoN,
    /// `P + 1` outputs: source rows carry the parent of their class.
    ParentLabel,
    /// Informative labels, but target rows whose top classifier probability is
    /// below `threshold` are left out of the discriminator loss.
    ConfidenceFiltered { threshold: f64 },
}

impl DiscVariant {
    pub fn name(&self) -> &'static str {
        match self {
            DiscVariant::Informative => "informative",
            DiscVariant::Binary => "binary",
            DiscVariant::TwoN => "two_n",
            DiscVariant::ParentLabel => "parent_label",
            DiscVariant::ConfidenceFiltered { .. } => "confidence_filtered",
        }
    }

    pub const NAMES: [&'static str; 5] = ["informative", "binary", "two_n", "parent_label", "confidence_filtered"];

    /// Parses a variant name; `confidence_filtered` takes its threshold as
    /// `confidence_filtered:0.9` and defaults to 0.9.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let v = match (name, arg) {
            ("informative", None) => DiscVariant::Informative,
            ("binary", None) => DiscVariant::Binary,
            ("two_n", None) => DiscVariant::TwoN,
            ("parent_label", None) => DiscVariant::ParentLabel,
            ("confidence_filtered", a) => {
                let threshold = match a {
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad confidence threshold `{a}`")))?,
                    None => 0.9,
                };
                DiscVariant::ConfidenceFiltered { threshold }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown discriminator variant `{s}`; allowed: {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        if let DiscVariant::ConfidenceFiltered { threshold } = self {
            if !(*threshold > 0.0 && *threshold < 1.0) {
                return Err(Error::Config(format!(
                    "confidence threshold must lie in (0, 1), got {threshold}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for DiscVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscVariant::ConfidenceFiltered { threshold } => write!(f, "confidence_filtered:{threshold}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for DiscVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Feature extractor architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    /// `dense(hidden) -> relu -> dense(D)` on flat inputs.
    Mlp { hidden: usize },
    /// `conv -> relu -> pool(2) -> conv -> relu -> pool(2) -> flatten -> dense(D)`
    /// on `[C, H, W]` inputs, valid padding, stride 1.
    ConvNet { channels: [usize; 2], kernel: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shape of one sample, without the batch axis.
    pub input_shape: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub backbone: Backbone,
    pub classifier_hidden: usize,
    pub discriminator_hidden: usize,
    pub variant: DiscVariant,
    /// Parent class of every class, for the parent-label discriminator.
    #[serde(default)]
    pub parent_map: Option<Vec<usize>>,
}

impl ModelConfig {
    /// Small MLP for 2-D synthetic data.
    pub fn synthetic(num_classes: usize, variant: DiscVariant) -> Self {
        Self {
            input_shape: vec![2],
            feature_dim: 16,
            num_classes,
            backbone: Backbone::Mlp { hidden: 64 },
            classifier_hidden: 32,
            discriminator_hidden: 32,
            variant,
            parent_map: None,
        }
    }

    /// Two-stage convnet for 3x28x28 digit images.
    pub fn digits(variant: DiscVariant) -> Self {
        Self {
            input_shape: vec![3, 28, 28],
            feature_dim: 100,
            num_classes: 10,
            backbone: Backbone::ConvNet {
                channels: [32, 48],
                kernel: 5,
            },
            classifier_hidden: 100,
            discriminator_hidden: 100,
            variant,
            parent_map: None,
        }
    }

    pub fn with_parent_map(mut self, parents: Vec<usize>) -> Self {
        self.parent_map = Some(parents);
        self
    }

    pub fn with_variant(mut self, variant: DiscVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn num_parents(&self) -> Option<usize> {
        self.parent_map
            .as_ref()
            .map(|m| m.iter().copied().max().map_or(0, |p| p + 1))
    }

    /// Output width of the discriminator head.
    pub fn discriminator_width(&self) -> Result<usize> {
        let c = self.num_classes;
        Ok(match self.variant {
            DiscVariant::Informative | DiscVariant::ConfidenceFiltered { .. } => c + 1,
            DiscVariant::Binary => 2,
            DiscVariant::TwoN => 2 * c,
            DiscVariant::ParentLabel => {
                self.num_parents()
                    .ok_or_else(|| Error::Config("parent_label variant needs a parent_map".into()))?
                    + 1
            }
        })
    }

    /// Index the discriminator uses for target rows (not meaningful for `two_n`,
    /// whose target block starts at `C`).
    pub fn fake_index(&self) -> Result<usize> {
        Ok(match self.variant {
            DiscVariant::TwoN => self.num_classes,
            _ => self.discriminator_width()? - 1,
        })
    }

    /// Whether discriminator class `k` means "target domain".
    pub fn predicts_target(&self, k: usize) -> Result<bool> {
        Ok(match self.variant {
            DiscVariant::TwoN => k >= self.num_classes,
            _ => k == self.fake_index()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::Config("num_classes and feature_dim must be positive".into()));
        }
        if self.classifier_hidden == 0 || self.discriminator_hidden == 0 {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!("bad input shape {:?}", self.input_shape)));
        }
        self.variant.validate()?;
        if let Some(map) = &self.parent_map {
            if map.len() != self.num_classes {
                return Err(Error::Config(format!(
                    "parent_map covers {} classes, model has {}",
                    map.len(),
                    self.num_classes
                )));
            }
            let p = self.num_parents().unwrap_or(0);
            if (0..p).any(|k| !map.contains(&k)) {
                return Err(Error::Config("parent indices must be contiguous from 0".into()));
            }
        }
        self.discriminator_width()?;
        self.flat_conv_width()?;
        Ok(())
    }

    fn flat_conv_width(&self) -> Result<usize> {
        match &self.backbone {
            Backbone::Mlp { hidden } => {
                if self.input_shape.len() != 1 || *hidden == 0 {
                    return Err(Error::Config("mlp backbone needs a flat input and hidden > 0".into()));
                }
                Ok(self.input_shape[0])
            }
            Backbone::ConvNet { channels, kernel } => {
                if self.input_shape.len() != 3 {
                    return Err(Error::Config("convnet backbone needs a [C, H, W] input".into()));
                }
                let mut h = self.input_shape[1];
                let mut w = self.input_shape[2];
                for _ in 0..2 {
                    if h < *kernel || w < *kernel {
                        return Err(Error::Config("input too small for the convnet".into()));
                    }
                    // Valid convolution, then 2x2 pooling.
                    h = (h - (kernel - 1)) / 2;
                    w = (w - (kernel - 1)) / 2;
                    if h == 0 || w == 0 {
                        return Err(Error::Config("input too small for the convnet".into()));
                    }
                }
                Ok(channels[1] * h * w)
            }
        }
    }

    /// Parameter names and shapes, plus whether each layer feeds a ReLU.
    fn layout(&self) -> Result<Vec<(String, Vec<usize>, bool)>> {
        let mut out = Vec::new();
        let dense = |name: &str, fan_in: usize, fan_out: usize, relu: bool, out: &mut Vec<_>| {
            out.push((format!("{name}.weight"), vec![fan_in, fan_out], relu));
            out.push((format!("{name}.bias"), vec![fan_out], relu));
        };
        match &self.backbone {
            Backbone::Mlp { hidden } => {
                dense("f.fc1", self.input_shape[0], *hidden, true, &mut out);
                dense("f.fc2", *hidden, self.feature_dim, false, &mut out);
            }
            Backbone::ConvNet { channels, kernel } => {
                let k = *kernel;
                out.push(("f.conv1.weight".into(), vec![channels[0], self.input_shape[0], k, k], true));
                out.push(("f.conv1.bias".into(), vec![channels[0]], true));
                out.push(("f.conv2.weight".into(), vec![channels[1], channels[0], k, k], true));
                out.push(("f.conv2.bias".into(), vec![channels[1]], true));
                dense("f.fc", self.flat_conv_width()?, self.feature_dim, false, &mut out);
            }
        }
        dense("c.fc1", self.feature_dim, self.classifier_hidden, true, &mut out);
        dense("c.fc2", self.classifier_hidden, self.num_classes, false, &mut out);
        dense("d.fc1", self.feature_dim, self.discriminator_hidden, true, &mut out);
        dense("d.fc2", self.discriminator_hidden, self.discriminator_width()?, false, &mut out);
        Ok(out)
    }

    /// Appends the feature extractor to `g`, returning the `[N, D]` feature node.
    pub fn feature_graph(&self, g: &mut Graph, x: NodeId) -> NodeId {
        match &self.backbone {
            Backbone::Mlp { .. } => {
                let h = g.dense(x, "f.fc1");
                let h = g.relu(h);
                g.dense(h, "f.fc2")
            }
            Backbone::ConvNet { .. } => {
                let mut h = x;
                for layer in ["f.conv1", "f.conv2"] {
                    let w = g.input(&format!("{layer}.weight"));
                    let b = g.input(&format!("{layer}.bias"));
                    h = g.conv2d(h, w, 1, 0);
                    h = g.add_bias(h, b);
                    h = g.relu(h);
                    h = g.max_pool2d(h, 2, 2);
                }
                let h = g.flatten(h);
                g.dense(h, "f.fc")
            }
        }
    }

    pub fn classifier_graph(&self, g: &mut Graph, features: NodeId) -> NodeId {
        let h = g.dense(features, "c.fc1");
        let h = g.relu(h);
        g.dense(h, "c.fc2")
    }

    pub fn discriminator_graph(&self, g: &mut Graph, features: NodeId) -> NodeId {
        let h = g.dense(features, "d.fc1");
        let h = g.relu(h);
        g.dense(h, "d.fc2")
    }
}

/// The three networks and their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct IddaModel {
    pub config: ModelConfig,
    pub params: ParamSet<f32>,
}

/// Initializes a model. Each network draws from its own seed stream, so the
/// feature extractor and classifier are identical across variants.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<IddaModel> {
    config.validate()?;
    let mut streams = [
        ("f.", rng::stream(seed, Stream::FeatureInit)),
        ("c.", rng::stream(seed, Stream::ClassifierInit)),
        ("d.", rng::stream(seed, Stream::DiscriminatorInit)),
    ];
    let mut params = ParamSet::new();
    for (name, shape, feeds_relu) in config.layout()? {
        let rng: &mut ChaCha8Rng = &mut streams
            .iter_mut()
            .find(|(p, _)| name.starts_with(p))
            .expect("every parameter has a network prefix")
            .1;
        let tensor = if name.ends_with(".bias") {
            Tensor::zeros(shape)?
        } else {
            let (fan_in, fan_out) = fans(&shape);
            let limit = if feeds_relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| rng.random_range(-limit..limit) as f32)
                .collect();
            Tensor::new(shape, data)?
        };
        params.insert(name, tensor);
    }
    Ok(IddaModel { config, params })
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        2 => (shape[0], shape[1]),
        4 => (shape[1] * shape[2] * shape[3], shape[0] * shape[2] * shape[3]),
        _ => (shape.iter().product(), 1),
    }
}

/// Row-wise softmax of a `[N, K]` tensor.
pub fn softmax_rows(logits: &Tensor<f32>) -> Tensor<f32> {
    let k = logits.shape()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(logits.shape(), out).expect("same shape")
}

impl IddaModel {
    /// Wraps existing parameters, checking every name and shape against `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet<f32>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout()?;
        if layout.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        for (name, shape, _) in layout {
            let t = params
                .get(&name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, config implies {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    fn check_batch(&self, x: &Tensor<f32>) -> Result<()> {
        if x.rank() != self.config.input_shape.len() + 1 || x.shape()[1..] != self.config.input_shape[..] {
            return Err(Error::shape(
                "model input",
                format!("got {:?}, expected [N, {:?}]", x.shape(), self.config.input_shape),
            ));
        }
        Ok(())
    }

    fn check_features(&self, f: &Tensor<f32>) -> Result<()> {
        if f.rank() != 2 || f.shape()[1] != self.config.feature_dim {
            return Err(Error::shape(
                "features",
                format!("got {:?}, expected width {}", f.shape(), self.config.feature_dim),
            ));
        }
        Ok(())
    }

    fn run_chunked(&self, x: &Tensor<f32>, build: impl Fn(&mut Graph, NodeId) -> NodeId) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let input = g.input("x");
        let out = build(&mut g, input);
        let n = x.rows();
        let mut rows = Vec::new();
        let mut width = 0;
        for start in (0..n).step_by(INFERENCE_CHUNK) {
            let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(n)).collect();
            let chunk = x.select_rows(&idx)?;
            let mut b: Bindings<'_, f32> = Bindings::new();
            self.params.bind(&mut b);
            b.insert("x", &chunk);
            let tape = forward(&g, &b)?;
            let v = tape.value(out);
            width = v.row_width();
            rows.extend_from_slice(v.data());
        }
        Tensor::new([n, width], rows)
    }

    /// `G_f(x)` for a batch `[N, input_shape...]`, returning `[N, D]`.
    pub fn extract_features(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_batch(x)?;
        self.run_chunked(x, |g, i| self.config.feature_graph(g, i))
    }

    /// Class probabilities `[N, C]` from features.
    pub fn classify(&self, features: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_features(features)?;
        let logits = self.run_chunked(features, |g, i| self.config.classifier_graph(g, i))?;
        Ok(softmax_rows(&logits))
    }

    /// Discriminator probabilities `[N, width]` from features.
    pub fn discriminate(&self, features: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_features(features)?;
        let logits = self.run_chunked(features, |g, i| self.config.discriminator_graph(g, i))?;
        Ok(softmax_rows(&logits))
    }

    /// Argmax class predictions for raw inputs.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Vec<usize>> {
        let probs = self.classify(&self.extract_features(x)?)?;
        Ok((0..probs.rows()).map(|i| argmax(probs.row(i))).collect())
    }

    /// Parameters of one network (`"f."`, `"c."` or `"d."`).
    pub fn network_params<'s>(&'s self, prefix: &'s str) -> impl Iterator<Item = (&'s str, &'s Tensor<f32>)> + 's {
        self.params.with_prefix(prefix)
    }
}

/// Target of the discriminator for one row of a mixed batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainLabel {
    Index(usize),
    /// Left out of the discriminator loss.
    Excluded,
}

impl DomainLabel {
    pub fn index(self) -> Option<usize> {
        match self {
            DomainLabel::Index(i) => Some(i),
            DomainLabel::Excluded => None,
        }
    }

    /// Encoding used by the cross-entropy label tensor.
    pub fn as_label_value(self) -> f32 {
        match self {
            DomainLabel::Index(i) => i as f32,
            DomainLabel::Excluded => -1.0,
        }
    }
}

/// Discriminator targets for a batch laid out as all source rows followed by
/// `n_target` target rows.
///
/// `classifier_output` holds the classifier's `[n_target, C]` probabilities
/// for the target rows; `two_n` and `confidence_filtered` require it.
pub fn assign_domain_labels(
    config: &ModelConfig,
    source_labels: &[Option<usize>],
    n_target: usize,
    classifier_output: Option<&Tensor<f32>>,
) -> Result<Vec<DomainLabel>> {
    let c = config.num_classes;
    let mut out = Vec::with_capacity(source_labels.len() + n_target);
    for (i, y) in source_labels.iter().enumerate() {
        let y = y.ok_or_else(|| Error::MissingLabels(format!("source row {i} has no label")))?;
        if y >= c {
            return Err(Error::InvalidLabel {
                label: y as i64,
                classes: c,
            });
        }
        out.push(DomainLabel::Index(match config.variant {
            DiscVariant::Binary => 0,
            DiscVariant::ParentLabel => {
                config
                    .parent_map
                    .as_ref()
                    .ok_or_else(|| Error::Config("parent_label variant needs a parent_map".into()))?[y]
            }
            _ => y,
        }));
    }
    let needs_predictions = matches!(
        config.variant,
        DiscVariant::TwoN | DiscVariant::ConfidenceFiltered { .. }
    );
    let probs = match (needs_predictions, classifier_output) {
        (true, None) => {
            return Err(Error::MissingLabels(format!(
                "{} labels need classifier output for target rows",
                config.variant.name()
            )))
        }
        (true, Some(p)) => {
            if p.rank() != 2 || p.shape() != [n_target, c] {
                return Err(Error::shape(
                    "classifier output",
                    format!("got {:?}, expected [{n_target}, {c}]", p.shape()),
                ));
            }
            Some(p)
        }
        (false, _) => None,
    };
    let fake = config.fake_index()?;
    for i in 0..n_target {
        out.push(match config.variant {
            DiscVariant::TwoN => {
                let row = probs.expect("checked above").row(i);
                DomainLabel::Index(c + argmax(row))
            }
            DiscVariant::ConfidenceFiltered { threshold } => {
                let row = probs.expect("checked above").row(i);
                let top = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                if f64::from(top) < threshold {
                    DomainLabel::Excluded
                } else {
                    DomainLabel::Index(fake)
                }
            }
            _ => DomainLabel::Index(fake),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: usize, variant: DiscVariant) -> ModelConfig {
        ModelConfig::synthetic(c, variant)
    }

    #[test]
    fn head_widths_follow_variant() {
        let m = build_model(cfg(31, DiscVariant::Informative), 0).unwrap();
        assert_eq!(m.params.get("d.fc2.weight").unwrap().shape()[1], 32);
        let m = build_model(cfg(10, DiscVariant::TwoN), 0).unwrap();
        assert_eq!(m.params.get("d.fc2.weight").unwrap().shape()[1], 20);
        let parents: Vec<usize> = (0..43).map(|k| if k < 11 { 0 } else if k < 34 { 1 } else { 2 }).collect();
        let m = build_model(cfg(43, DiscVariant::ParentLabel).with_parent_map(parents), 0).unwrap();
        assert_eq!(m.params.get("d.fc2.weight").unwrap().shape()[1], 4);
        let m = build_model(cfg(5, DiscVariant::Binary), 0).unwrap();
        assert_eq!(m.params.get("d.fc2.weight").unwrap().shape()[1], 2);
        assert_eq!(m.params.get("c.fc2.weight").unwrap().shape()[1], 5);
    }

    #[test]
    fn parent_label_requires_map() {
        assert!(build_model(cfg(4, DiscVariant::ParentLabel), 0).is_err());
        assert!(build_model(cfg(4, DiscVariant::ParentLabel).with_parent_map(vec![0, 1, 0]), 0).is_err());
        assert!(build_model(cfg(3, DiscVariant::ParentLabel).with_parent_map(vec![0, 2, 0]), 0).is_err());
    }

    #[test]
    fn build_is_reproducible() {
        let a = build_model(cfg(3, DiscVariant::Informative), 9).unwrap();
        let b = build_model(cfg(3, DiscVariant::Informative), 9).unwrap();
        assert_eq!(a, b);
        let c = build_model(cfg(3, DiscVariant::Binary), 9).unwrap();
        for (name, t) in a.network_params("f.").chain(a.network_params("c.")) {
            assert_eq!(t, c.params.get(name).unwrap(), "{name} differs across variants");
        }
    }

    #[test]
    fn from_params_rechecks_widths() {
        let m = build_model(cfg(3, DiscVariant::Informative), 1).unwrap();
        let wrong = cfg(3, DiscVariant::Binary);
        assert!(IddaModel::from_params(wrong, m.params.clone()).is_err());
        assert!(IddaModel::from_params(m.config.clone(), m.params).is_ok());
    }

    #[test]
    fn informative_labels_zero_based() {
        let c = cfg(31, DiscVariant::Informative);
        let labels = assign_domain_labels(&c, &[Some(3)], 1, None).unwrap();
        assert_eq!(labels, vec![DomainLabel::Index(3), DomainLabel::Index(31)]);
    }

    #[test]
    fn two_n_uses_classifier_argmax() {
        let c = cfg(10, DiscVariant::TwoN);
        let mut row = vec![0.01f32; 10];
        row[7] = 0.91;
        let probs = Tensor::new([1, 10], row).unwrap();
        let labels = assign_domain_labels(&c, &[Some(2)], 1, Some(&probs)).unwrap();
        assert_eq!(labels, vec![DomainLabel::Index(2), DomainLabel::Index(17)]);
        assert!(assign_domain_labels(&c, &[Some(2)], 1, None).is_err());
    }

    #[test]
    fn confidence_filter_excludes_uncertain_targets() {
        let c = cfg(3, DiscVariant::ConfidenceFiltered { threshold: 0.9 });
        let probs = Tensor::new([2, 3], vec![0.4, 0.3, 0.3, 0.95, 0.03, 0.02]).unwrap();
        let labels = assign_domain_labels(&c, &[Some(1)], 2, Some(&probs)).unwrap();
        assert_eq!(
            labels,
            vec![DomainLabel::Index(1), DomainLabel::Excluded, DomainLabel::Index(3)]
        );
    }

    #[test]
    fn binary_and_parent_labels() {
        let b = cfg(4, DiscVariant::Binary);
        let labels = assign_domain_labels(&b, &[Some(3), Some(0)], 1, None).unwrap();
        assert_eq!(labels, vec![DomainLabel::Index(0), DomainLabel::Index(0), DomainLabel::Index(1)]);
        let p = cfg(4, DiscVariant::ParentLabel).with_parent_map(vec![0, 0, 1, 1]);
        let labels = assign_domain_labels(&p, &[Some(3), Some(1)], 1, None).unwrap();
        assert_eq!(labels, vec![DomainLabel::Index(1), DomainLabel::Index(0), DomainLabel::Index(2)]);
    }

    #[test]
    fn missing_source_label_is_an_error() {
        let c = cfg(3, DiscVariant::Informative);
        assert!(matches!(
            assign_domain_labels(&c, &[None], 0, None),
            Err(Error::MissingLabels(_))
        ));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(DiscVariant::parse("informative").unwrap(), DiscVariant::Informative);
        assert_eq!(
            DiscVariant::parse("confidence_filtered:0.7").unwrap(),
            DiscVariant::ConfidenceFiltered { threshold: 0.7 }
        );
        let err = DiscVariant::parse("bogus").unwrap_err().to_string();
        assert!(err.contains("informative") && err.contains("two_n"), "{err}");
        assert!(DiscVariant::parse("confidence_filtered:1.5").is_err());
    }
}
