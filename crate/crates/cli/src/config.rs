//! `key = value` settings with dotted keys. Later assignments override
//! earlier ones, so flags applied after the file win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use idda::data::{PatchSource, SyntheticShiftConfig};
use idda::experiment::{Benchmark, LAMBDA_GRID};
use idda::model::DiscVariant;
use idda::train::{Method, TrainConfig};

/// A problem with the user's input. Always maps to exit code 1.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError {
    pub key: Option<String>,
    pub message: String,
}

impl UsageError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            key: None,
            message: message.into(),
        }
    }

    pub fn at(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{k}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for UsageError {}

const BENCHMARKS: &[&str] = &["gaussian_modes", "two_moons", "digits"];
const METHODS: &[&str] = &["source_only", "adversarial"];
const ABLATION: &[&str] = &[
    "source_only",
    "binary",
    "informative",
    "two_n",
    "parent_label",
    "confidence_filtered",
];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Int,
    Float,
    /// A float, or `none`.
    OptFloat,
    Bool,
    Path,
    Choice(&'static [&'static str]),
    IntList,
    FloatList,
    ChoiceList(&'static [&'static str]),
    Pair,
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Int => "a non-negative integer".into(),
            Kind::Float => "a number".into(),
            Kind::OptFloat => "a number or `none`".into(),
            Kind::Bool => "`true` or `false`".into(),
            Kind::Path => "a path".into(),
            Kind::Choice(c) => format!("one of {}", c.join(", ")),
            Kind::IntList => "a comma-separated list of integers or a range `a..b`".into(),
            Kind::FloatList => "a comma-separated list of numbers".into(),
            Kind::ChoiceList(c) => format!("a comma-separated list drawn from {}", c.join(", ")),
            Kind::Pair => "two comma-separated numbers".into(),
        }
    }
}

/// Every accepted key, its type and a one-line description.
const KEYS: &[(&str, Kind, &str)] = &[
    ("data.benchmark", Kind::Choice(BENCHMARKS), "benchmark to load"),
    ("data.dir", Kind::Path, "directory holding images-idx3-ubyte.gz and labels-idx1-ubyte.gz"),
    ("data.n_source", Kind::Int, "source samples"),
    ("data.n_target", Kind::Int, "target samples"),
    ("data.noise", Kind::Float, "two-moons noise"),
    ("data.shift_deg", Kind::Float, "two-moons target rotation"),
    ("data.num_classes", Kind::Int, "Gaussian classes"),
    ("data.modes_per_class", Kind::Int, "Gaussian modes per class"),
    ("data.radius", Kind::Float, "radius of the Gaussian mode circle"),
    ("data.covariance_scale", Kind::Float, "per-axis standard deviation of each mode"),
    ("data.rotation_deg", Kind::Float, "Gaussian target rotation"),
    ("data.translation", Kind::Pair, "Gaussian target translation"),
    ("data.patches", Kind::Path, "`procedural` or a directory of color images"),
    ("model.variant", Kind::Choice(&DiscVariant::NAMES), "discriminator variant"),
    ("model.confidence_threshold", Kind::Float, "confidence_filtered threshold"),
    ("train.method", Kind::Choice(METHODS), "adversarial training or the source-only baseline"),
    ("train.epochs", Kind::Int, "epochs"),
    ("train.batch_size", Kind::Int, "source plus target rows per step"),
    ("train.lambda", Kind::Float, "gradient reversal strength"),
    ("train.learning_rate", Kind::Float, "SGD learning rate"),
    ("train.momentum", Kind::Float, "SGD momentum"),
    ("train.grad_clip", Kind::OptFloat, "global gradient norm cap"),
    ("train.checkpoint_interval", Kind::Int, "epochs between checkpoints, 0 for none"),
    ("train.log_target_accuracy", Kind::Bool, "log hidden-label target accuracy per epoch"),
    ("run.seeds", Kind::IntList, "seeds"),
    ("run.out", Kind::Path, "output root"),
    ("sweep.lambdas", Kind::FloatList, "lambda grid"),
    ("ablate.methods", Kind::ChoiceList(ABLATION), "methods to compare"),
    ("ablate.alpha", Kind::Float, "Nemenyi significance level"),
    ("eval.checkpoint", Kind::Path, "checkpoint to evaluate or analyze"),
    ("analyze.blind", Kind::Bool, "write -1 instead of hidden target labels"),
];

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Int(u64),
    Float(f64),
    OptFloat(Option<f64>),
    Bool(bool),
    Text(String),
    Ints(Vec<u64>),
    Floats(Vec<f64>),
    Texts(Vec<String>),
    Pair([f64; 2]),
}

fn parse_value(key: &str, kind: Kind, raw: &str) -> Result<Value, UsageError> {
    let bad = || UsageError::at(key, format!("expected {}, got `{raw}`", kind.describe()));
    let float = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let list = |s: &str| -> Vec<String> {
        s.split(',')
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect()
    };
    Ok(match kind {
        Kind::Int => Value::Int(raw.parse().map_err(|_| bad())?),
        Kind::Float => Value::Float(float(raw).ok_or_else(bad)?),
        Kind::OptFloat if raw == "none" => Value::OptFloat(None),
        Kind::OptFloat => Value::OptFloat(Some(float(raw).ok_or_else(bad)?)),
        Kind::Bool => Value::Bool(raw.parse().map_err(|_| bad())?),
        Kind::Path => {
            if raw.is_empty() {
                return Err(bad());
            }
            Value::Text(raw.to_string())
        }
        Kind::Choice(allowed) => {
            if !allowed.contains(&raw) {
                return Err(bad());
            }
            Value::Text(raw.to_string())
        }
        Kind::IntList => {
            if let Some((a, b)) = raw.split_once("..") {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if b <= a {
                    return Err(bad());
                }
                Value::Ints((a..b).collect())
            } else {
                let v = list(raw)
                    .iter()
                    .map(|p| p.parse().map_err(|_| bad()))
                    .collect::<Result<Vec<u64>, _>>()?;
                if v.is_empty() {
                    return Err(bad());
                }
                Value::Ints(v)
            }
        }
        Kind::FloatList => {
            let v = list(raw)
                .iter()
                .map(|p| float(p).ok_or_else(bad))
                .collect::<Result<Vec<f64>, _>>()?;
            if v.is_empty() {
                return Err(bad());
            }
            Value::Floats(v)
        }
        Kind::ChoiceList(allowed) => {
            let v = list(raw);
            if v.is_empty() || v.iter().any(|p| !allowed.contains(&p.as_str())) {
                return Err(bad());
            }
            Value::Texts(v)
        }
        Kind::Pair => {
            let v = list(raw);
            match v.as_slice() {
                [a, b] => Value::Pair([float(a).ok_or_else(bad)?, float(b).ok_or_else(bad)?]),
                _ => return Err(bad()),
            }
        }
    })
}

/// Explicitly assigned settings, in the order they were given.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, (Value, String)>,
}

impl Settings {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), UsageError> {
        let raw = raw.trim();
        let Some(&(name, kind, _)) = KEYS.iter().find(|(k, _, _)| *k == key) else {
            return Err(UsageError::at(key, "unknown key; run `idda keys` for the accepted keys"));
        };
        let value = parse_value(key, kind, raw)?;
        self.values.insert(name, (value, raw.to_string()));
        Ok(())
    }

    /// Applies a `key = value` file. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError::new(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// The explicit settings in file syntax; reading them back reproduces `self`.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, (_, raw))| format!("{k} = {raw}\n")).collect()
    }

    pub fn explicit(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, (_, raw))| (k.to_string(), raw.clone())).collect()
    }

    fn get(&self, key: &str) -> Option<&Value> {
        debug_assert!(KEYS.iter().any(|(k, _, _)| *k == key), "unregistered key {key}");
        self.values.get(key).map(|(v, _)| v)
    }

    fn usize_or(&self, key: &str, default: usize) -> usize {
        match self.get(key) {
            Some(Value::Int(v)) => *v as usize,
            _ => default,
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> f64 {
        match self.get(key) {
            Some(Value::Float(v)) => *v,
            _ => default,
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> bool {
        match self.get(key) {
            Some(Value::Bool(v)) => *v,
            _ => default,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(Value::Text(v)) => Some(v),
            _ => None,
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.text(key).map(PathBuf::from)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self.get("run.seeds") {
            Some(Value::Ints(v)) => v.clone(),
            _ => vec![0],
        }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        match self.get("sweep.lambdas") {
            Some(Value::Floats(v)) => v.clone(),
            _ => LAMBDA_GRID.to_vec(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.f64_or("ablate.alpha", 0.05)
    }

    pub fn blind(&self) -> bool {
        self.bool_or("analyze.blind", false)
    }

    fn threshold(&self) -> f64 {
        self.f64_or("model.confidence_threshold", 0.9)
    }

    pub fn variant(&self) -> Result<DiscVariant, UsageError> {
        let name = self.text("model.variant").unwrap_or("informative");
        let v = DiscVariant::parse(name).map_err(|e| UsageError::at("model.variant", e.to_string()))?;
        Ok(match v {
            DiscVariant::ConfidenceFiltered { .. } => DiscVariant::ConfidenceFiltered {
                threshold: self.threshold(),
            },
            v => v,
        })
    }

    pub fn method(&self) -> Result<Method, UsageError> {
        match self.text("train.method").unwrap_or("adversarial") {
            "source_only" => Ok(Method::SourceOnly),
            _ => Ok(Method::Adversarial(self.variant()?)),
        }
    }

    pub fn ablation_methods(&self) -> Result<Vec<Method>, UsageError> {
        let names: Vec<String> = match self.get("ablate.methods") {
            Some(Value::Texts(v)) => v.clone(),
            _ => ABLATION.iter().map(|s| s.to_string()).collect(),
        };
        names
            .iter()
            .map(|n| match n.as_str() {
                "source_only" => Ok(Method::SourceOnly),
                n => {
                    let v = DiscVariant::parse(n).map_err(|e| UsageError::at("ablate.methods", e.to_string()))?;
                    Ok(Method::Adversarial(match v {
                        DiscVariant::ConfidenceFiltered { .. } => DiscVariant::ConfidenceFiltered {
                            threshold: self.threshold(),
                        },
                        v => v,
                    }))
                }
            })
            .collect()
    }

    pub fn benchmark(&self) -> Result<Benchmark, UsageError> {
        let name = self.text("data.benchmark").unwrap_or("gaussian_modes");
        let only = |keys: &[&str]| -> Result<(), UsageError> {
            let foreign: &[&str] = &[
                "data.dir",
                "data.noise",
                "data.shift_deg",
                "data.num_classes",
                "data.modes_per_class",
                "data.radius",
                "data.covariance_scale",
                "data.rotation_deg",
                "data.translation",
                "data.patches",
            ];
            match foreign.iter().find(|k| self.is_set(k) && !keys.contains(k)) {
                Some(k) => Err(UsageError::at(k, format!("not used by the {name} benchmark"))),
                None => Ok(()),
            }
        };
        let mut bench = match name {
            "two_moons" => {
                only(&["data.noise", "data.shift_deg"])?;
                Benchmark::two_moons()
            }
            "digits" => {
                only(&["data.dir", "data.patches"])?;
                Benchmark::digits(self.path("data.dir").unwrap_or_else(|| PathBuf::from("data/mnist10k")))
            }
            _ => {
                only(&[
                    "data.num_classes",
                    "data.modes_per_class",
                    "data.radius",
                    "data.covariance_scale",
                    "data.rotation_deg",
                    "data.translation",
                ])?;
                Benchmark::gaussian_modes()
            }
        };
        match &mut bench {
            Benchmark::TwoMoons {
                shift_deg,
                n_source,
                n_target,
                noise,
            } => {
                *shift_deg = self.f64_or("data.shift_deg", *shift_deg);
                *n_source = self.usize_or("data.n_source", *n_source);
                *n_target = self.usize_or("data.n_target", *n_target);
                *noise = self.f64_or("data.noise", *noise);
            }
            Benchmark::GaussianModes { config } => {
                let d = config.clone();
                *config = SyntheticShiftConfig {
                    num_classes: self.usize_or("data.num_classes", d.num_classes),
                    modes_per_class: self.usize_or("data.modes_per_class", d.modes_per_class),
                    radius: self.f64_or("data.radius", d.radius),
                    covariance_scale: self.f64_or("data.covariance_scale", d.covariance_scale),
                    rotation_deg: self.f64_or("data.rotation_deg", d.rotation_deg),
                    translation: match self.get("data.translation") {
                        Some(Value::Pair(p)) => *p,
                        _ => d.translation,
                    },
                    n_source: self.usize_or("data.n_source", d.n_source),
                    n_target: self.usize_or("data.n_target", d.n_target),
                    ..d
                };
                config
                    .validate()
                    .map_err(|e| UsageError::at("data.benchmark", e.to_string()))?;
            }
            Benchmark::Digits {
                n_source,
                n_target,
                patches,
                ..
            } => {
                *n_source = self.usize_or("data.n_source", *n_source);
                *n_target = self.usize_or("data.n_target", *n_target);
                if let Some(p) = self.text("data.patches") {
                    *patches = if p == "procedural" {
                        PatchSource::Procedural
                    } else {
                        PatchSource::Directory(PathBuf::from(p))
                    };
                }
            }
        }
        Ok(bench)
    }

    /// Benchmark defaults overridden by `train.*` settings.
    pub fn train_config(&self, bench: &Benchmark) -> Result<TrainConfig, UsageError> {
        let d = bench.default_train();
        let cfg = TrainConfig {
            epochs: self.usize_or("train.epochs", d.epochs),
            batch_size: self.usize_or("train.batch_size", d.batch_size),
            lambda: self.f64_or("train.lambda", d.lambda),
            learning_rate: self.f64_or("train.learning_rate", d.learning_rate),
            momentum: self.f64_or("train.momentum", d.momentum),
            method: self.method()?,
            checkpoint_interval: self.usize_or("train.checkpoint_interval", d.checkpoint_interval),
            log_target_accuracy: self.bool_or("train.log_target_accuracy", d.log_target_accuracy),
            grad_clip: match self.get("train.grad_clip") {
                Some(Value::OptFloat(v)) => *v,
                _ => d.grad_clip,
            },
            ..d
        };
        cfg.validate().map_err(|e| {
            let key = match e {
                idda::Error::NegativeLambda(_) => "train.lambda",
                _ => "train",
            };
            UsageError::at(key, e.to_string())
        })?;
        Ok(cfg)
    }
}

/// Accepted keys with their types, one per line.
pub fn describe_keys() -> String {
    KEYS.iter()
        .map(|(k, kind, help)| format!("{k:28} {help} ({})\n", kind.describe()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_assignments_win() {
        let mut s = Settings::default();
        s.apply_text("train.lambda = 1.0\n# comment\nmodel.variant = binary  # trailing\n")
            .unwrap();
        s.set("train.lambda", "0.4").unwrap();
        let cfg = s.train_config(&s.benchmark().unwrap()).unwrap();
        assert_eq!(cfg.lambda, 0.4);
        assert_eq!(cfg.method, Method::Adversarial(DiscVariant::Binary));
    }

    #[test]
    fn errors_name_the_key_and_choices() {
        let mut s = Settings::default();
        let e = s.set("model.variant", "bogus").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("model.variant"));
        assert!(e.message.contains("informative") && e.message.contains("confidence_filtered"));
        assert!(s.set("train.nope", "1").is_err());
        assert!(s.set("train.epochs", "1.5").is_err());
        assert!(s.apply_text("just words").is_err());
    }

    #[test]
    fn seeds_accept_lists_and_ranges() {
        let mut s = Settings::default();
        s.set("run.seeds", "0..3").unwrap();
        assert_eq!(s.seeds(), vec![0, 1, 2]);
        s.set("run.seeds", "4, 7").unwrap();
        assert_eq!(s.seeds(), vec![4, 7]);
        assert!(s.set("run.seeds", "3..3").is_err());
    }

    #[test]
    fn text_round_trips() {
        let mut s = Settings::default();
        s.apply_text("data.benchmark = two_moons\ndata.noise = 0.2\nrun.seeds = 1,2\n")
            .unwrap();
        let mut back = Settings::default();
        back.apply_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn keys_of_other_benchmarks_are_rejected() {
        let mut s = Settings::default();
        s.apply_text("data.benchmark = two_moons\ndata.radius = 3\n").unwrap();
        assert_eq!(s.benchmark().unwrap_err().key.as_deref(), Some("data.radius"));
    }
}
