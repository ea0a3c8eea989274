//! Joint training of the feature extractor, classifier and discriminator.
//!
//! One step minimizes `L_y + lambda * L_d` where `L_y` is the mean
//! cross-entropy of the classifier on the source half and `L_d` the mean
//! cross-entropy of the discriminator on the whole mixed batch. The
//! discriminator sees the features through a gradient reversal of strength
//! `lambda`, so it descends `L_d` while the feature extractor ascends it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, forward, sgd_step, Bindings, Graph, NodeId, ParamSet, SgdState, Tensor};
use crate::container::TensorFile;
use crate::data::{hidden_labels, source_inputs, target_inputs, DomainData, LabeledSample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::model::{assign_domain_labels, DiscVariant, DomainLabel, IddaModel, ModelConfig};
use crate::rng::{self, Stream};

/// Header of the per-step metrics CSV.
pub const METRICS_HEADER: &str = "epoch,step,loss_y,loss_d,total,src_acc,tgt_acc,disc_acc,lambda,seed,variant";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classification loss only; the discriminator is never evaluated.
    SourceOnly,
    /// Joint objective with the given discriminator variant.
    Adversarial(DiscVariant),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SourceOnly => "source_only",
            Method::Adversarial(v) => v.name(),
        }
    }

    /// `source_only` or any discriminator variant name.
    pub fn parse(s: &str) -> Result<Self> {
        if s.trim() == "source_only" {
            Ok(Method::SourceOnly)
        } else {
            DiscVariant::parse(s).map(Method::Adversarial)
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Adversarial(v) => write!(f, "{v}"),
            Method::SourceOnly => f.write_str("source_only"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Source half plus target half; must be even.
    pub batch_size: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub method: Method,
    /// Epochs between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Evaluate hidden target labels at the end of each epoch, for logging only.
    pub log_target_accuracy: bool,
    /// Caps the global gradient norm of each step.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lambda: 1.0,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            method: Method::Adversarial(DiscVariant::Informative),
            checkpoint_interval: 1,
            checkpoint_dir: None,
            log_target_accuracy: true,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn half(&self) -> usize {
        self.batch_size / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "batch size must be even and >= 2, got {}",
                self.batch_size
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::NegativeLambda(self.lambda));
        }
        SgdState::<f32>::new(self.learning_rate, self.momentum)?;
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("grad_clip must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Errors unless an adversarial method names the model's own variant.
    pub fn check_model(&self, model: &ModelConfig) -> Result<()> {
        match self.method {
            Method::Adversarial(v) if v != model.variant => Err(Error::VariantMismatch {
                model: model.variant.to_string(),
                train: v.to_string(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss_y: f64,
    pub loss_d: f64,
    /// `loss_y + lambda * loss_d`.
    pub total: f64,
    pub src_acc: f64,
    /// Share of included rows whose predicted domain is right; `None` without a discriminator.
    pub disc_acc: Option<f64>,
}

/// Row indices of one mixed batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchIndices {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Successive permutations of `0..n`, cut into `count` slices of `half`.
fn draw_slices(n: usize, half: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut pool: Vec<usize> = Vec::new();
    let mut pos = 0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut slice = Vec::with_capacity(half);
        while slice.len() < half {
            if pos == pool.len() {
                pool = (0..n).collect();
                pool.shuffle(rng);
                pos = 0;
            }
            let take = (half - slice.len()).min(pool.len() - pos);
            slice.extend_from_slice(&pool[pos..pos + take]);
            pos += take;
        }
        out.push(slice);
    }
    out
}

/// Batch schedule of one epoch. The larger domain is covered once without
/// replacement (up to a final partial batch); the smaller one recycles with
/// fresh permutations. All source draws precede all target draws.
pub fn epoch_plan(n_source: usize, n_target: usize, half: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BatchIndices>> {
    if n_source == 0 || n_target == 0 {
        return Err(Error::Empty("both domains need at least one sample".into()));
    }
    if half == 0 {
        return Err(Error::Config("batch halves must hold at least one sample".into()));
    }
    let steps = (n_source.max(n_target) / half).max(1);
    let s = draw_slices(n_source, half, steps, rng);
    let t = draw_slices(n_target, half, steps, rng);
    Ok(s.into_iter()
        .zip(t)
        .map(|(source, target)| BatchIndices { source, target })
        .collect())
}

/// A mixed minibatch. Target labels are deliberately absent.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub source_x: Tensor<f32>,
    pub source_y: Vec<usize>,
    pub target_x: Tensor<f32>,
}

/// Domain data stacked once into batch tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub source_x: Tensor<f32>,
    pub source_y: Vec<usize>,
    pub target_x: Tensor<f32>,
    /// Evaluation-only labels; never reaches [`Batch`].
    target_hidden: Option<Vec<usize>>,
}

impl PreparedData {
    pub fn new(source: &[LabeledSample], target: &[UnlabeledSample]) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::Empty("both domains need at least one sample".into()));
        }
        Ok(Self {
            source_x: source_inputs(source)?,
            source_y: source.iter().map(|s| s.y).collect(),
            target_x: target_inputs(target)?,
            target_hidden: hidden_labels(target).ok(),
        })
    }

    pub fn from_domain(data: &DomainData) -> Result<Self> {
        Self::new(&data.source, &data.target)
    }

    pub fn target_hidden(&self) -> Option<&[usize]> {
        self.target_hidden.as_deref()
    }

    pub fn n_source(&self) -> usize {
        self.source_y.len()
    }

    pub fn n_target(&self) -> usize {
        self.target_x.rows()
    }
}

pub fn compose_batch(data: &PreparedData, idx: &BatchIndices) -> Result<Batch> {
    Ok(Batch {
        source_x: data.source_x.select_rows(&idx.source)?,
        source_y: idx.source.iter().map(|&i| data.source_y[i]).collect(),
        target_x: data.target_x.select_rows(&idx.target)?,
    })
}

struct StepGraph {
    graph: Graph,
    source_logits: NodeId,
    loss_y: NodeId,
    disc_logits: Option<NodeId>,
    loss_d: Option<NodeId>,
}

/// Source-only graphs contain no target path at all. Adversarial graphs run
/// the feature extractor separately on each half over shared parameters, so
/// the source path is computed exactly as in a source-only run.
fn step_graph(config: &ModelConfig, method: Method, lambda: f64) -> Result<StepGraph> {
    let mut g = Graph::new();
    let xs = g.input("xs");
    let fs = config.feature_graph(&mut g, xs);
    let source_logits = config.classifier_graph(&mut g, fs);
    let ys = g.input("ys");
    let loss_y = g.softmax_cross_entropy(source_logits, ys);
    let (disc_logits, loss_d) = match method {
        Method::SourceOnly => (None, None),
        Method::Adversarial(_) => {
            let xt = g.input("xt");
            let ft = config.feature_graph(&mut g, xt);
            let f = g.concat(&[fs, ft]);
            let r = g.grad_reverse(f, lambda)?;
            let logits = config.discriminator_graph(&mut g, r);
            let dl = g.input("dl");
            (Some(logits), Some(g.softmax_cross_entropy(logits, dl)))
        }
    };
    Ok(StepGraph {
        graph: g,
        source_logits,
        loss_y,
        disc_logits,
        loss_d,
    })
}

/// Discriminator targets for `batch` under the model's variant, running a
/// classifier pass on the target half when the variant needs predictions.
pub fn batch_domain_labels(model: &IddaModel, batch: &Batch) -> Result<Vec<DomainLabel>> {
    let needs_predictions = matches!(
        model.config.variant,
        DiscVariant::TwoN | DiscVariant::ConfidenceFiltered { .. }
    );
    let probs = if needs_predictions {
        Some(model.classify(&model.extract_features(&batch.target_x)?)?)
    } else {
        None
    };
    let source: Vec<Option<usize>> = batch.source_y.iter().map(|&y| Some(y)).collect();
    assign_domain_labels(&model.config, &source, batch.target_x.rows(), probs.as_ref())
}

fn labels_tensor(values: impl Iterator<Item = f32>) -> Result<Tensor<f32>> {
    let v: Vec<f32> = values.collect();
    Tensor::new([v.len()], v)
}

/// One optimizer step on `batch`. Metrics describe the parameters before the update.
pub fn training_step(
    model: &mut IddaModel,
    optimizer: &mut SgdState<f32>,
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    cfg.check_model(&model.config)?;
    if batch.source_y.is_empty() || batch.target_x.rows() == 0 {
        return Err(Error::Empty("batch halves are empty".into()));
    }
    let sg = step_graph(&model.config, cfg.method, cfg.lambda)?;
    let ys = labels_tensor(batch.source_y.iter().map(|&y| y as f32))?;
    let domain = match cfg.method {
        Method::SourceOnly => None,
        Method::Adversarial(_) => Some(batch_domain_labels(model, batch)?),
    };
    let dl = match &domain {
        Some(d) => Some(labels_tensor(d.iter().map(|l| l.as_label_value()))?),
        None => None,
    };

    let mut b: Bindings<'_, f32> = Bindings::new();
    model.params.bind(&mut b);
    b.insert("xs", &batch.source_x);
    b.insert("ys", &ys);
    if let Some(dl) = &dl {
        b.insert("xt", &batch.target_x);
        b.insert("dl", dl);
    }
    let mut tape = forward(&sg.graph, &b)?;
    let loss_y = f64::from(tape.scalar(sg.loss_y)?);
    let logits = tape.value(sg.source_logits);
    let correct = (0..logits.rows())
        .filter(|&i| argmax(logits.row(i)) == batch.source_y[i])
        .count();
    let src_acc = correct as f64 / logits.rows() as f64;

    let (loss_d, disc_acc, roots) = match (sg.loss_d, sg.disc_logits, &domain) {
        (Some(ld), Some(dlog), Some(domain)) => {
            let loss_d = f64::from(tape.scalar(ld)?);
            let d = tape.value(dlog);
            let n_s = batch.source_y.len();
            let mut right = 0usize;
            let mut counted = 0usize;
            for (i, label) in domain.iter().enumerate() {
                if label.index().is_none() {
                    continue;
                }
                counted += 1;
                let says_target = model.config.predicts_target(argmax(d.row(i)))?;
                if says_target == (i >= n_s) {
                    right += 1;
                }
            }
            let acc = (counted > 0).then(|| right as f64 / counted as f64);
            (loss_d, acc, vec![(sg.loss_y, 1.0f32), (ld, 1.0)])
        }
        _ => (0.0, None, vec![(sg.loss_y, 1.0f32)]),
    };
    let mut grads = tape.backward_weighted(&roots)?;
    if let Some(c) = cfg.grad_clip {
        grads.clip_global_norm(c);
    }
    drop(tape);
    drop(b);
    sgd_step(&mut model.params, &grads, optimizer)?;
    Ok(StepMetrics {
        loss_y,
        loss_d,
        total: loss_y + cfg.lambda * loss_d,
        src_acc,
        disc_acc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub metrics: StepMetrics,
    /// Hidden-label target accuracy after the last step of an epoch.
    pub tgt_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
}

impl TrainHistory {
    /// Mean metrics per epoch: `(epoch, loss_y, loss_d, total, src_acc)`.
    pub fn epoch_means(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        let mut out: Vec<(usize, f64, f64, f64, f64, usize)> = Vec::new();
        for r in &self.steps {
            match out.last_mut() {
                Some(last) if last.0 == r.epoch => {
                    last.1 += r.metrics.loss_y;
                    last.2 += r.metrics.loss_d;
                    last.3 += r.metrics.total;
                    last.4 += r.metrics.src_acc;
                    last.5 += 1;
                }
                _ => out.push((
                    r.epoch,
                    r.metrics.loss_y,
                    r.metrics.loss_d,
                    r.metrics.total,
                    r.metrics.src_acc,
                    1,
                )),
            }
        }
        out.into_iter()
            .map(|(e, a, b, c, d, n)| {
                let n = n as f64;
                (e, a / n, b / n, c / n, d / n)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, cfg: &TrainConfig) -> Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.steps {
            let m = &r.metrics;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.step,
                m.loss_y,
                m.loss_d,
                m.total,
                m.src_acc,
                opt(r.tgt_acc),
                opt(m.disc_acc),
                cfg.lambda,
                cfg.seed,
                cfg.method.name()
            )?;
        }
        Ok(())
    }
}

/// Configuration echo stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Resumable training state.
pub struct Trainer {
    pub model: IddaModel,
    pub optimizer: SgdState<f32>,
    pub config: TrainConfig,
    /// Epochs completed so far.
    pub epoch: usize,
    batch_rng: ChaCha8Rng,
    pub history: TrainHistory,
}

impl Trainer {
    pub fn new(model: IddaModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        config.check_model(&model.config)?;
        Ok(Self {
            optimizer: SgdState::new(config.learning_rate, config.momentum)?,
            batch_rng: rng::stream(config.seed, Stream::Batches),
            model,
            config,
            epoch: 0,
            history: TrainHistory::default(),
        })
    }

    /// Runs one epoch and records its steps.
    pub fn run_epoch(&mut self, data: &PreparedData) -> Result<()> {
        let plan = epoch_plan(data.n_source(), data.n_target(), self.config.half(), &mut self.batch_rng)?;
        let last = plan.len() - 1;
        for (step, idx) in plan.iter().enumerate() {
            let batch = compose_batch(data, idx)?;
            let metrics = training_step(&mut self.model, &mut self.optimizer, &batch, &self.config)?;
            let tgt_acc = match (step == last && self.config.log_target_accuracy, data.target_hidden()) {
                (true, Some(labels)) => Some(evaluate(&self.model, &data.target_x, labels)?.accuracy),
                _ => None,
            };
            self.history.steps.push(StepRecord {
                epoch: self.epoch,
                step,
                metrics,
                tgt_acc,
            });
        }
        self.epoch += 1;
        Ok(())
    }

    /// Trains until `config.epochs` epochs are complete, checkpointing at the
    /// configured interval when a directory is set.
    pub fn run(&mut self, data: &PreparedData) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch(data)?;
            if let Some(dir) = &self.config.checkpoint_dir {
                let every = self.config.checkpoint_interval;
                if every > 0 && self.epoch.is_multiple_of(every) {
                    fs::create_dir_all(dir)?;
                    self.save_checkpoint(dir.join(checkpoint_name(self.epoch)))?;
                }
            }
        }
        Ok(())
    }

    pub fn to_container(&self) -> Result<TensorFile> {
        let mut f = TensorFile::default();
        for (name, t) in self.model.params.iter() {
            f.push(format!("param/{name}"), t.clone());
        }
        for (name, t) in &self.optimizer.velocity {
            f.push(format!("velocity/{name}"), t.clone());
        }
        let epoch = self.epoch as u64;
        f.push_words("meta/epoch", &[epoch as u32, (epoch >> 32) as u32]);
        f.push_words("meta/rng", &rng::save_state(&self.batch_rng));
        let echo = RunConfig {
            model: self.model.config.clone(),
            train: self.config.clone(),
        };
        f.push_bytes("meta/config", &serde_json::to_vec(&echo)?);
        Ok(f)
    }

    pub fn from_container(f: &TensorFile) -> Result<Self> {
        let echo: RunConfig = serde_json::from_slice(&f.bytes("meta/config")?)?;
        let mut params = ParamSet::new();
        let mut velocity = std::collections::BTreeMap::new();
        for (name, t) in &f.entries {
            if let Some(p) = name.strip_prefix("param/") {
                params.insert(p, t.clone());
            } else if let Some(v) = name.strip_prefix("velocity/") {
                velocity.insert(v.to_string(), t.clone().with_requires_grad(false));
            }
        }
        let model = IddaModel::from_params(echo.model, params)?;
        let mut trainer = Trainer::new(model, echo.train)?;
        trainer.optimizer.velocity = velocity;
        let e = f.words("meta/epoch")?;
        if e.len() != 2 {
            return Err(Error::Checkpoint("meta/epoch must hold two words".into()));
        }
        trainer.epoch = (u64::from(e[0]) | (u64::from(e[1]) << 32)) as usize;
        trainer.batch_rng = rng::restore_state(&f.words("meta/rng")?)
            .ok_or_else(|| Error::Checkpoint("meta/rng must hold 14 words".into()))?;
        Ok(trainer)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    /// Restores a trainer; its history starts empty.
    pub fn resume(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorFile::load(path)?)
    }
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Trains a model from scratch according to `cfg`.
pub fn train(model: IddaModel, data: &PreparedData, cfg: &TrainConfig) -> Result<(IddaModel, TrainHistory)> {
    let mut t = Trainer::new(model, cfg.clone())?;
    t.run(data)?;
    Ok((t.model, t.history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes absent from the labels.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate_predictions(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Evaluation> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "evaluate",
            format!("{} predictions for {} labels", predictions.len(), labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if y >= num_classes || p >= num_classes {
            return Err(Error::InvalidLabel {
                label: y.max(p) as i64,
                classes: num_classes,
            });
        }
        confusion[y][p] += 1;
    }
    let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[k] as f64 / n as f64)
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        per_class,
        confusion,
    })
}

/// Accuracy of argmax class predictions on `x` against `labels`.
pub fn evaluate(model: &IddaModel, x: &Tensor<f32>, labels: &[usize]) -> Result<Evaluation> {
    evaluate_predictions(&model.predict(x)?, labels, model.config.num_classes)
}

pub fn evaluate_labeled(model: &IddaModel, samples: &[LabeledSample]) -> Result<Evaluation> {
    let labels: Vec<usize> = samples.iter().map(|s| s.y).collect();
    evaluate(model, &source_inputs(samples)?, &labels)
}

/// Evaluates target samples against their hidden labels.
pub fn evaluate_target(model: &IddaModel, samples: &[UnlabeledSample]) -> Result<Evaluation> {
    let labels = hidden_labels(samples)?;
    evaluate(model, &target_inputs(samples)?, &labels)
}

/// Share of held-out rows whose domain the discriminator gets right, where a
/// row is called target exactly when the discriminator's argmax is a target class.
pub fn domain_accuracy(model: &IddaModel, source_x: &Tensor<f32>, target_x: &Tensor<f32>) -> Result<f64> {
    let mut right = 0usize;
    for (x, is_target) in [(source_x, false), (target_x, true)] {
        let p = model.discriminate(&model.extract_features(x)?)?;
        for i in 0..p.rows() {
            if model.config.predicts_target(argmax(p.row(i)))? == is_target {
                right += 1;
            }
        }
    }
    let n = source_x.rows() + target_x.rows();
    if n == 0 {
        return Err(Error::Empty("no held-out rows".into()));
    }
    Ok(right as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_two_moons;
    use crate::model::build_model;

    fn moons() -> PreparedData {
        let (s, t) = gen_two_moons(30.0, 100, 60, 0.1, 1).unwrap();
        PreparedData::new(&s, &t).unwrap()
    }

    #[test]
    fn plan_covers_larger_domain_once() {
        let mut r = rng::stream(0, Stream::Batches);
        let plan = epoch_plan(100, 37, 10, &mut r).unwrap();
        assert_eq!(plan.len(), 10);
        let mut seen: Vec<usize> = plan.iter().flat_map(|b| b.source.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        assert!(plan.iter().all(|b| b.source.len() == 10 && b.target.len() == 10));
        assert!(plan.iter().flat_map(|b| &b.target).all(|&i| i < 37));
        let mut r2 = rng::stream(0, Stream::Batches);
        assert_eq!(plan, epoch_plan(100, 37, 10, &mut r2).unwrap());
        assert!(epoch_plan(0, 5, 2, &mut r2).is_err());
    }

    #[test]
    fn batch_halves_split_evenly() {
        let data = moons();
        let cfg = TrainConfig {
            batch_size: 64,
            ..Default::default()
        };
        let mut r = rng::stream(0, Stream::Batches);
        let plan = epoch_plan(data.n_source(), data.n_target(), cfg.half(), &mut r).unwrap();
        let b = compose_batch(&data, &plan[0]).unwrap();
        assert_eq!((b.source_x.rows(), b.target_x.rows()), (32, 32));
    }

    #[test]
    fn informative_batch_labels_targets_with_fake_class() {
        let model = build_model(ModelConfig::synthetic(10, DiscVariant::Informative), 0).unwrap();
        let batch = Batch {
            source_x: Tensor::zeros([32, 2]).unwrap(),
            source_y: (0..32).map(|i| i % 10).collect(),
            target_x: Tensor::zeros([32, 2]).unwrap(),
        };
        let labels = batch_domain_labels(&model, &batch).unwrap();
        let fake = labels.iter().filter(|l| **l == DomainLabel::Index(10)).count();
        assert_eq!(fake, 32);
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let model = build_model(ModelConfig::synthetic(2, DiscVariant::Binary), 0).unwrap();
        let cfg = TrainConfig {
            method: Method::Adversarial(DiscVariant::Informative),
            ..Default::default()
        };
        assert!(matches!(Trainer::new(model, cfg), Err(Error::VariantMismatch { .. })));
    }

    #[test]
    fn total_combines_terms() {
        let data = moons();
        let cfg = TrainConfig {
            lambda: 0.4,
            epochs: 1,
            ..Default::default()
        };
        let model = build_model(ModelConfig::synthetic(2, DiscVariant::Informative), 3).unwrap();
        let (_, h) = train(model, &data, &cfg).unwrap();
        assert_eq!(h.steps.len(), 3);
        for r in &h.steps {
            let m = r.metrics;
            assert!((m.total - (m.loss_y + 0.4 * m.loss_d)).abs() < 1e-12);
            assert!(m.loss_y >= 0.0 && m.loss_d >= 0.0);
        }
        assert!(h.steps.last().unwrap().tgt_acc.is_some());
    }

    #[test]
    fn evaluation_basics() {
        let e = evaluate_predictions(&[0, 1, 2, 2], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(e.accuracy, 0.75);
        assert_eq!(e.confusion[1], vec![0, 1, 1]);
        assert_eq!(e.per_class, vec![Some(1.0), Some(0.5), Some(1.0)]);
        let constant = evaluate_predictions(&[0; 6], &[0, 1, 2, 0, 1, 2], 3).unwrap();
        assert!((constant.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert!(evaluate_target(
            &build_model(ModelConfig::synthetic(2, DiscVariant::Binary), 0).unwrap(),
            &[UnlabeledSample::new(Tensor::zeros([2]).unwrap(), None)]
        )
        .is_err());
    }

    #[test]
    fn metrics_csv_has_header_and_rows() {
        let data = moons();
        let cfg = TrainConfig {
            epochs: 1,
            method: Method::SourceOnly,
            ..Default::default()
        };
        let model = build_model(ModelConfig::synthetic(2, DiscVariant::Informative), 3).unwrap();
        let (_, h) = train(model, &data, &cfg).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf, &cfg).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 11);
        assert_eq!(row[10], "source_only");
    }
}
