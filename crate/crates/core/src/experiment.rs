//! Benchmarks and multi-seed runners shared by the command line and tests.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{median, RunRecord};
use crate::autodiff::Tensor;
use crate::data::{
    gaussian_sample, gen_gaussian_modes, gen_two_moons, gray_to_rgb, load_idx, subset_indices, synth_mnist_m,
    two_moons_sample, DomainData, LabeledSample, PatchSource, SyntheticShiftConfig,
};
use crate::error::{Error, Result};
use crate::model::{build_model, DiscVariant, IddaModel, ModelConfig};
use crate::rng::{self, Stream};
use crate::train::{domain_accuracy, train, Method, PreparedData, TrainConfig, TrainHistory};

/// Held-out rows per domain for discriminator accuracy on synthetic benchmarks.
const HELD_OUT: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Benchmark {
    TwoMoons {
        shift_deg: f64,
        n_source: usize,
        n_target: usize,
        noise: f64,
    },
    /// Seed fields of the config are replaced by the run seed.
    GaussianModes { config: SyntheticShiftConfig },
    /// Digits from IDX files in `data_dir` as source; the same pool blended
    /// over color patches as target.
    Digits {
        data_dir: PathBuf,
        n_source: usize,
        n_target: usize,
        patches: PatchSource,
    },
}

impl Benchmark {
    pub fn two_moons() -> Self {
        Benchmark::TwoMoons {
            shift_deg: 30.0,
            n_source: 300,
            n_target: 300,
            noise: 0.1,
        }
    }

    /// Three classes with two well separated modes each, rotated by 20 degrees.
    pub fn gaussian_modes() -> Self {
        Benchmark::GaussianModes {
            config: SyntheticShiftConfig {
                rotation_deg: 20.0,
                ..SyntheticShiftConfig::default()
            },
        }
    }

    pub fn digits(data_dir: impl Into<PathBuf>) -> Self {
        Benchmark::Digits {
            data_dir: data_dir.into(),
            n_source: 10_000,
            n_target: 10_000,
            patches: PatchSource::Procedural,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::TwoMoons { .. } => "two_moons",
            Benchmark::GaussianModes { .. } => "gaussian_modes",
            Benchmark::Digits { .. } => "digits",
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Benchmark::TwoMoons { .. } => 2,
            Benchmark::GaussianModes { config } => config.num_classes,
            Benchmark::Digits { .. } => 10,
        }
    }

    /// Architecture for `variant`. Classes are grouped into parents `k / 2`.
    pub fn model_config(&self, variant: DiscVariant) -> ModelConfig {
        let c = self.num_classes();
        let base = match self {
            Benchmark::Digits { .. } => ModelConfig::digits(variant),
            _ => ModelConfig::synthetic(c, variant),
        };
        base.with_parent_map((0..c).map(|k| k / 2).collect())
    }

    pub fn default_train(&self) -> TrainConfig {
        match self {
            Benchmark::Digits { .. } => TrainConfig {
                epochs: 10,
                batch_size: 64,
                learning_rate: 0.01,
                log_target_accuracy: false,
                checkpoint_interval: 0,
                ..TrainConfig::default()
            },
            // The adversarial game on 2-D inputs oscillates at larger steps.
            _ => TrainConfig {
                epochs: 1000,
                batch_size: 64,
                learning_rate: 0.001,
                log_target_accuracy: false,
                checkpoint_interval: 0,
                ..TrainConfig::default()
            },
        }
    }

    /// Generates or loads the data for one seed.
    pub fn load(&self, seed: u64) -> Result<BenchmarkData> {
        match self {
            Benchmark::TwoMoons {
                shift_deg,
                n_source,
                n_target,
                noise,
            } => {
                let (source, target) = gen_two_moons(*shift_deg, *n_source, *n_target, *noise, seed)?;
                let mut r = rng::stream(seed, Stream::HeldOutData);
                let hs = two_moons_sample(HELD_OUT, *noise, 0.0, &mut r);
                let ht = two_moons_sample(HELD_OUT, *noise, *shift_deg, &mut r);
                BenchmarkData::new(self.name(), DomainData { source, target }, Some((hs, ht)))
            }
            Benchmark::GaussianModes { config } => {
                let cfg = SyntheticShiftConfig {
                    seed,
                    ..config.clone()
                };
                let (source, target) = gen_gaussian_modes(&cfg)?;
                let mut r = rng::stream(seed, Stream::HeldOutData);
                let hs = gaussian_sample(&cfg, HELD_OUT, false, &mut r);
                let ht = gaussian_sample(&cfg, HELD_OUT, true, &mut r);
                BenchmarkData::new(self.name(), DomainData { source, target }, Some((hs, ht)))
            }
            Benchmark::Digits {
                data_dir,
                n_source,
                n_target,
                patches,
            } => {
                let all = load_idx(
                    data_dir.join("images-idx3-ubyte.gz"),
                    data_dir.join("labels-idx1-ubyte.gz"),
                )?;
                let mut r = rng::stream(seed, Stream::Split);
                let src_idx = subset_indices(all.len(), *n_source, &mut r);
                let tgt_idx = subset_indices(all.len(), *n_target, &mut r);
                let source = src_idx
                    .iter()
                    .map(|&i| {
                        Ok(LabeledSample {
                            x: gray_to_rgb(&all[i].x)?,
                            y: all[i].y,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let digits: Vec<LabeledSample> = tgt_idx.iter().map(|&i| all[i].clone()).collect();
                let target = synth_mnist_m(&digits, patches, seed)?;
                BenchmarkData::new(self.name(), DomainData { source, target }, None)
            }
        }
    }
}

/// One seed's data for a benchmark.
pub struct BenchmarkData {
    pub name: String,
    pub domain: DomainData,
    pub prepared: PreparedData,
    /// Fresh source and target inputs, never trained on.
    pub held_out: Option<(Tensor<f32>, Tensor<f32>)>,
}

impl BenchmarkData {
    fn new(name: &str, domain: DomainData, held: Option<(Vec<LabeledSample>, Vec<LabeledSample>)>) -> Result<Self> {
        let held_out = match held {
            Some((s, t)) => Some((crate::data::source_inputs(&s)?, crate::data::source_inputs(&t)?)),
            None => None,
        };
        Ok(Self {
            name: name.to_string(),
            prepared: PreparedData::from_domain(&domain)?,
            domain,
            held_out,
        })
    }
}

pub struct RunOutcome {
    pub method: Method,
    pub seed: u64,
    pub model: IddaModel,
    pub history: TrainHistory,
    pub target_accuracy: f64,
    /// Held-out discriminator domain accuracy, when a discriminator was trained
    /// and held-out data exists.
    pub domain_accuracy: Option<f64>,
}

/// Trains `method` from a fresh initialization drawn from `seed`.
/// Source-only runs use the informative architecture and never touch its discriminator.
pub fn run_method(
    bench: &Benchmark,
    data: &BenchmarkData,
    method: Method,
    base: &TrainConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let variant = match method {
        Method::Adversarial(v) => v,
        Method::SourceOnly => DiscVariant::Informative,
    };
    let model = build_model(bench.model_config(variant), seed)?;
    let cfg = TrainConfig {
        method,
        seed,
        ..base.clone()
    };
    let (model, history) = train(model, &data.prepared, &cfg)?;
    let labels = data
        .prepared
        .target_hidden()
        .ok_or_else(|| Error::MissingLabels("target set has no hidden labels for evaluation".into()))?;
    let target_accuracy = crate::train::evaluate(&model, &data.prepared.target_x, labels)?.accuracy;
    let domain_accuracy = match (&data.held_out, method) {
        (Some((s, t)), Method::Adversarial(_)) => Some(domain_accuracy(&model, s, t)?),
        _ => None,
    };
    Ok(RunOutcome {
        method,
        seed,
        model,
        history,
        target_accuracy,
        domain_accuracy,
    })
}

/// Every ablation method, in reporting order.
pub fn ablation_methods() -> Vec<Method> {
    vec![
        Method::SourceOnly,
        Method::Adversarial(DiscVariant::Binary),
        Method::Adversarial(DiscVariant::Informative),
        Method::Adversarial(DiscVariant::TwoN),
        Method::Adversarial(DiscVariant::ParentLabel),
        Method::Adversarial(DiscVariant::ConfidenceFiltered { threshold: 0.9 }),
    ]
}

/// One record per `(method, seed)`. Runs are independent and execute in parallel.
pub fn ablation_suite(bench: &Benchmark, methods: &[Method], seeds: &[u64], base: &TrainConfig) -> Result<Vec<RunRecord>> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(Error::Empty("need at least one method and one seed".into()));
    }
    let per_seed: Vec<Vec<RunRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let data = bench.load(seed)?;
            methods
                .par_iter()
                .map(|&m| {
                    let out = run_method(bench, &data, m, base, seed)?;
                    Ok(RunRecord {
                        dataset: bench.name().to_string(),
                        method: m.name().to_string(),
                        seed,
                        target_accuracy: out.target_accuracy,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_domain_accuracy: f64,
    pub median_domain_accuracy: f64,
    pub mean_target_accuracy: f64,
    pub median_target_accuracy: f64,
    pub domain_accuracy: Vec<f64>,
    pub target_accuracy: Vec<f64>,
}

/// Trains `base.method` once per `(lambda, seed)`; one row per lambda in input order.
pub fn lambda_sweep(bench: &Benchmark, base: &TrainConfig, lambdas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::Empty("no seeds".into()));
    }
    if let Some(&l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::NegativeLambda(l));
    }
    if !matches!(base.method, Method::Adversarial(_)) {
        return Err(Error::Config("a lambda sweep needs an adversarial method".into()));
    }
    let datasets: Vec<BenchmarkData> = seeds.par_iter().map(|&s| bench.load(s)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|l| (0..seeds.len()).map(move |s| (l, s)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(l, s)| {
            let cfg = TrainConfig {
                lambda: lambdas[l],
                ..base.clone()
            };
            let out = run_method(bench, &datasets[s], base.method, &cfg, seeds[s])?;
            let dom = out
                .domain_accuracy
                .ok_or_else(|| Error::Config("benchmark has no held-out domain data".into()))?;
            Ok((dom, out.target_accuracy))
        })
        .collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let rows = &results[l * seeds.len()..(l + 1) * seeds.len()];
            let dom: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let tgt: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            SweepRow {
                lambda,
                mean_domain_accuracy: mean(&dom),
                median_domain_accuracy: median(&dom),
                mean_target_accuracy: mean(&tgt),
                median_target_accuracy: median(&tgt),
                domain_accuracy: dom,
                target_accuracy: tgt,
            }
        })
        .collect())
}

/// The sensitivity grid used for lambda sweeps.
pub const LAMBDA_GRID: [f64; 8] = [0.0, 0.1, 0.4, 0.7, 1.0, 1.4, 1.7, 2.0];
