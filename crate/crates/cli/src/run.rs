//! Subcommand bodies. Each run owns a fresh timestamped directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use idda::analysis::{export_features, friedman_nemenyi, median, mode_purity, proxy_a_distance, Report};
use idda::container::FORMAT_VERSION;
use idda::experiment::{ablation_suite, lambda_sweep, Benchmark, BenchmarkData};
use idda::model::{build_model, DiscVariant};
use idda::train::{domain_accuracy, evaluate, Method, TrainConfig, Trainer};
use serde::Serialize;
use serde_json::json;

use crate::config::{Settings, UsageError};
use crate::Command;

/// Version of the manifest layout.
const MANIFEST_VERSION: u32 = 1;

pub enum Failure {
    Usage(UsageError),
    Runtime(anyhow::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<idda::Error> for Failure {
    fn from(e: idda::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// `IDDA_OUT` beats `run.out`, which beats `runs`.
fn output_root(s: &Settings) -> PathBuf {
    std::env::var_os("IDDA_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| s.path("run.out"))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn fresh_dir(root: &Path, cmd: Command) -> Outcome<PathBuf> {
    fs::create_dir_all(root).with_context(|| format!("cannot create output root {}", root.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    for n in 0.. {
        let name = match n {
            0 => format!("{}-{stamp}", cmd.name()),
            n => format!("{}-{stamp}-{n}", cmd.name()),
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(anyhow::Error::new(e).context(format!("cannot create {}", dir.display())).into()),
        }
    }
    unreachable!()
}

struct Run {
    cmd: Command,
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Run {
    fn path(&mut self, rel: &str) -> Outcome<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.artifacts.push(rel.to_string());
        Ok(p)
    }

    fn report(&mut self, rel: &str, report: &Report) -> Outcome<()> {
        let p = self.path(rel)?;
        report.save(p)?;
        Ok(())
    }

    fn manifest(&mut self, s: &Settings, seeds: &[u64], resolved: serde_json::Value) -> Outcome<()> {
        fs::write(self.dir.join("config.txt"), s.to_text())?;
        let m = json!({
            "manifest_version": MANIFEST_VERSION,
            "checkpoint_format_version": FORMAT_VERSION,
            "command": self.cmd.name(),
            "created": chrono::Local::now().to_rfc3339(),
            "seeds": seeds,
            "settings": s.explicit(),
            "resolved": resolved,
            "artifacts": self.artifacts,
        });
        let mut w = BufWriter::new(File::create(self.dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &m).context("writing manifest")?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn variant_of(m: Method) -> DiscVariant {
    match m {
        Method::Adversarial(v) => v,
        Method::SourceOnly => DiscVariant::Informative,
    }
}

fn load(bench: &Benchmark, seed: u64) -> Outcome<BenchmarkData> {
    Ok(bench
        .load(seed)
        .with_context(|| format!("loading {} for seed {seed}", bench.name()))?)
}

fn required(s: &Settings, key: &str, cmd: Command) -> Outcome<PathBuf> {
    s.path(key)
        .ok_or_else(|| UsageError::at(key, format!("required by {}", cmd.name())).into())
}

fn resolved(bench: &Benchmark, train: &TrainConfig) -> serde_json::Value {
    json!({ "benchmark": bench, "train": train })
}

/// Runs `cmd` and returns its output directory.
pub fn execute(cmd: Command, s: &Settings) -> Outcome<PathBuf> {
    let bench = s.benchmark()?;
    let train = s.train_config(&bench)?;
    let seeds = s.seeds();
    if matches!(cmd, Command::Eval | Command::Analyze) {
        required(s, "eval.checkpoint", cmd)?;
    }
    if cmd == Command::Sweep && train.method == Method::SourceOnly {
        return Err(UsageError::at("train.method", "a sweep needs `adversarial`").into());
    }
    let dir = fresh_dir(&output_root(s), cmd)?;
    let mut run = Run {
        cmd,
        dir: dir.clone(),
        artifacts: Vec::new(),
    };
    let result = match cmd {
        Command::Train => cmd_train(&mut run, &bench, &train, &seeds),
        Command::Eval => cmd_eval(&mut run, s, &bench, &seeds),
        Command::Sweep => cmd_sweep(&mut run, s, &bench, &train, &seeds),
        Command::Ablate => cmd_ablate(&mut run, s, &bench, &train, &seeds),
        Command::Analyze => cmd_analyze(&mut run, s, &bench, &seeds),
        Command::GenData => cmd_gen_data(&mut run, &bench, &seeds),
    };
    // The manifest is written even for failed runs so partial output stays traceable.
    let manifest = run.manifest(s, &seeds, resolved(&bench, &train));
    result?;
    manifest?;
    Ok(dir)
}

#[derive(Serialize)]
struct SeedResult {
    seed: u64,
    target_accuracy: f64,
    source_accuracy: f64,
    domain_accuracy: Option<f64>,
    final_loss_y: f64,
    final_loss_d: f64,
}

fn cmd_train(run: &mut Run, bench: &Benchmark, base: &TrainConfig, seeds: &[u64]) -> Outcome<()> {
    let mut results = Vec::new();
    for &seed in seeds {
        let data = load(bench, seed)?;
        let model = build_model(bench.model_config(variant_of(base.method)), seed)?;
        let cfg = TrainConfig {
            seed,
            checkpoint_dir: (base.checkpoint_interval > 0).then(|| run.dir.join(format!("seed_{seed}/checkpoints"))),
            ..base.clone()
        };
        let mut t = Trainer::new(model, cfg)?;
        t.run(&data.prepared)
            .with_context(|| format!("training seed {seed}"))?;
        let mut w = BufWriter::new(File::create(run.path(&format!("seed_{seed}/metrics.csv"))?)?);
        t.history.write_csv(&mut w, &t.config)?;
        w.flush()?;
        t.save_checkpoint(run.path(&format!("seed_{seed}/final.ckpt"))?)?;
        if let Some(d) = &t.config.checkpoint_dir {
            if d.exists() {
                run.artifacts.push(format!("seed_{seed}/checkpoints/"));
            }
        }
        results.push(score(&t, &data)?);
    }
    let accs: Vec<f64> = results.iter().map(|r| r.target_accuracy).collect();
    let report = Report::new(
        "target_accuracy",
        json!({ "median": median(&accs), "runs": results }),
        json!({ "benchmark": bench, "train": base }),
        seeds,
    )?;
    run.report("report.json", &report)
}

fn score(t: &Trainer, data: &BenchmarkData) -> Outcome<SeedResult> {
    let p = &data.prepared;
    let hidden = p
        .target_hidden()
        .ok_or_else(|| anyhow::anyhow!("target set has no hidden labels for evaluation"))?;
    let last = t.history.epoch_means().last().copied();
    let domain = match (&data.held_out, t.config.method) {
        (Some((s, tg)), Method::Adversarial(_)) => Some(domain_accuracy(&t.model, s, tg)?),
        _ => None,
    };
    Ok(SeedResult {
        seed: t.config.seed,
        target_accuracy: evaluate(&t.model, &p.target_x, hidden)?.accuracy,
        source_accuracy: evaluate(&t.model, &p.source_x, &p.source_y)?.accuracy,
        domain_accuracy: domain,
        final_loss_y: last.map_or(f64::NAN, |m| m.1),
        final_loss_d: last.map_or(f64::NAN, |m| m.2),
    })
}

/// Data seeds default to the checkpoint's own seed.
fn data_seeds(s: &Settings, t: &Trainer, seeds: &[u64]) -> Vec<u64> {
    if s.is_set("run.seeds") {
        seeds.to_vec()
    } else {
        vec![t.config.seed]
    }
}

fn cmd_eval(run: &mut Run, s: &Settings, bench: &Benchmark, seeds: &[u64]) -> Outcome<()> {
    let ckpt = required(s, "eval.checkpoint", run.cmd)?;
    let t = Trainer::resume(&ckpt).with_context(|| format!("reading checkpoint {}", ckpt.display()))?;
    let mut rows = Vec::new();
    for seed in data_seeds(s, &t, seeds) {
        let data = load(bench, seed)?;
        let p = &data.prepared;
        let hidden = p
            .target_hidden()
            .ok_or_else(|| anyhow::anyhow!("target set has no hidden labels for evaluation"))?;
        let target = evaluate(&t.model, &p.target_x, hidden)?;
        let source = evaluate(&t.model, &p.source_x, &p.source_y)?;
        let domain = match &data.held_out {
            Some((hs, ht)) if t.config.method != Method::SourceOnly => Some(domain_accuracy(&t.model, hs, ht)?),
            _ => None,
        };
        rows.push(json!({ "seed": seed, "target": target, "source": source, "domain_accuracy": domain }));
    }
    let report = Report::new(
        "evaluation",
        json!({ "checkpoint": ckpt, "epoch": t.epoch, "runs": rows }),
        json!({ "benchmark": bench, "train": t.config }),
        seeds,
    )?;
    run.report("report.json", &report)
}

fn cmd_sweep(run: &mut Run, s: &Settings, bench: &Benchmark, base: &TrainConfig, seeds: &[u64]) -> Outcome<()> {
    let lambdas = s.lambdas();
    let rows = lambda_sweep(bench, base, &lambdas, seeds).context("lambda sweep")?;
    let mut w = BufWriter::new(File::create(run.path("sweep.csv")?)?);
    writeln!(
        w,
        "lambda,median_domain_accuracy,mean_domain_accuracy,median_target_accuracy,mean_target_accuracy"
    )?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.lambda, r.median_domain_accuracy, r.mean_domain_accuracy, r.median_target_accuracy, r.mean_target_accuracy
        )?;
    }
    w.flush()?;
    let report = Report::new(
        "domain_accuracy_by_lambda",
        &rows,
        json!({ "benchmark": bench, "train": base, "lambdas": lambdas }),
        seeds,
    )?;
    run.report("report.json", &report)
}

fn cmd_ablate(run: &mut Run, s: &Settings, bench: &Benchmark, base: &TrainConfig, seeds: &[u64]) -> Outcome<()> {
    let methods = s.ablation_methods()?;
    let records = ablation_suite(bench, &methods, seeds, base).context("ablation")?;
    let mut w = BufWriter::new(File::create(run.path("records.csv")?)?);
    writeln!(w, "dataset,method,seed,target_accuracy")?;
    for r in &records {
        writeln!(w, "{},{},{},{}", r.dataset, r.method, r.seed, r.target_accuracy)?;
    }
    w.flush()?;
    // Rank statistics need at least two methods and two blocks.
    let ranks = if methods.len() >= 2 && seeds.len() >= 2 {
        Some(friedman_nemenyi(&records, s.alpha())?)
    } else {
        None
    };
    let names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
    let report = Report::new(
        "target_accuracy_ranks",
        json!({ "records": records, "friedman_nemenyi": ranks }),
        json!({ "benchmark": bench, "train": base, "methods": names, "alpha": s.alpha() }),
        seeds,
    )?;
    run.report("report.json", &report)
}

fn cmd_analyze(run: &mut Run, s: &Settings, bench: &Benchmark, seeds: &[u64]) -> Outcome<()> {
    let ckpt = required(s, "eval.checkpoint", run.cmd)?;
    let t = Trainer::resume(&ckpt).with_context(|| format!("reading checkpoint {}", ckpt.display()))?;
    let mut rows = Vec::new();
    for seed in data_seeds(s, &t, seeds) {
        let data = load(bench, seed)?;
        let p = &data.prepared;
        export_features(
            &t.model,
            &data.domain.source,
            &data.domain.target,
            s.blind(),
            run.path(&format!("features_seed_{seed}.csv"))?,
        )?;
        let fs = t.model.extract_features(&p.source_x)?;
        let ft = t.model.extract_features(&p.target_x)?;
        let probe = proxy_a_distance(&fs, &ft, seed)?;
        let purity = match p.target_hidden() {
            Some(h) if !s.blind() => Some(mode_purity(&ft, h, &fs, &p.source_y)?),
            _ => None,
        };
        rows.push(json!({ "seed": seed, "proxy_a_distance": probe, "mode_purity": purity }));
    }
    let report = Report::new(
        "feature_alignment",
        json!({ "checkpoint": ckpt, "runs": rows }),
        json!({ "benchmark": bench, "train": t.config, "blind": s.blind() }),
        seeds,
    )?;
    run.report("report.json", &report)
}

fn cmd_gen_data(run: &mut Run, bench: &Benchmark, seeds: &[u64]) -> Outcome<()> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let data = load(bench, seed)?;
        data.domain.save(run.path(&format!("data_seed_{seed}.idt"))?)?;
        rows.push(json!({
            "seed": seed,
            "n_source": data.domain.source.len(),
            "n_target": data.domain.target.len(),
        }));
    }
    let report = Report::new("generated", &rows, bench, seeds)?;
    run.report("report.json", &report)
}
