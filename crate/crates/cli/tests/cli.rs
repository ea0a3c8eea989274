use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--data.n_source=48",
    "--data.n_target=48",
    "--train.epochs=2",
    "--train.batch_size=16",
    "--train.learning_rate=0.01",
];

fn idda(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idda"))
        .args(args)
        .env("IDDA_OUT", out)
        .output()
        .unwrap()
}

fn small(cmd: &str, extra: &[&str]) -> Vec<String> {
    std::iter::once(cmd)
        .chain(SMALL.iter().copied())
        .chain(extra.iter().copied())
        .map(String::from)
        .collect()
}

fn run_ok(out: &Path, args: &[String]) -> PathBuf {
    let a: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = idda(out, &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    assert!(dir.starts_with(out), "{} not under {}", dir.display(), out.display());
    dir
}

fn usage_error(out: &Path, args: &[&str]) -> String {
    let o = idda(out, args);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=usage"), "{err}");
    err
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn train_writes_artifacts_and_manifest() {
    let out = tempfile::tempdir().unwrap();
    let dir = run_ok(
        out.path(),
        &small("train", &["--run.seeds=3,5", "--train.checkpoint_interval=1"]),
    );
    for seed in [3, 5] {
        // Two epochs of 48 rows in halves of 8.
        assert_eq!(csv_rows(&dir.join(format!("seed_{seed}/metrics.csv"))), 2 * 6);
        assert!(dir.join(format!("seed_{seed}/final.ckpt")).exists());
        assert!(dir.join(format!("seed_{seed}/checkpoints/epoch_0002.ckpt")).exists());
    }
    let m = manifest(&dir);
    assert_eq!(m["command"], "train");
    assert_eq!(m["seeds"], serde_json::json!([3, 5]));
    assert_eq!(m["resolved"]["train"]["epochs"], 2);
    assert_eq!(m["resolved"]["benchmark"]["kind"], "gaussian_modes");
    assert!(m["checkpoint_format_version"].is_u64());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["value"]["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn rerunning_the_saved_config_reproduces_metrics() {
    let out = tempfile::tempdir().unwrap();
    let first = run_ok(out.path(), &small("train", &["--model.variant=binary", "--run.seeds=2"]));
    let cfg = first.join("config.txt");
    let second = run_ok(out.path(), &["train".into(), "--config".into(), cfg.display().to_string()]);
    assert_ne!(first, second);
    let a = fs::read(first.join("seed_2/metrics.csv")).unwrap();
    assert_eq!(a, fs::read(second.join("seed_2/metrics.csv")).unwrap());
    assert_eq!(
        fs::read(first.join("seed_2/final.ckpt")).unwrap(),
        fs::read(second.join("seed_2/final.ckpt")).unwrap()
    );
}

#[test]
fn flags_override_the_config_file() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("exp.cfg");
    fs::write(&cfg, "train.lambda = 1.0\nmodel.variant = informative\ntrain.epochs = 1\ndata.n_source = 40\ndata.n_target = 40\n").unwrap();
    let dir = run_ok(
        out.path(),
        &["train".into(), format!("--config={}", cfg.display()), "--train.lambda=0.4".into()],
    );
    assert_eq!(manifest(&dir)["resolved"]["train"]["lambda"], 0.4);
}

#[test]
fn usage_errors_name_the_key() {
    let out = tempfile::tempdir().unwrap();
    let err = usage_error(out.path(), &["train", "--model.variant=bogus"]);
    assert!(err.contains("key=model.variant") && err.contains("informative, binary"), "{err}");
    let err = usage_error(out.path(), &["train", "--train.bogus=1"]);
    assert!(err.contains("key=train.bogus"), "{err}");
    let err = usage_error(out.path(), &["train", "--train.epochs=many"]);
    assert!(err.contains("key=train.epochs"), "{err}");
    let err = usage_error(out.path(), &["eval"]);
    assert!(err.contains("key=eval.checkpoint"), "{err}");
    let err = usage_error(out.path(), &["train", "--train.lambda=-1"]);
    assert!(err.contains("key=train.lambda"), "{err}");
    usage_error(out.path(), &["launch"]);
    usage_error(out.path(), &["train", "--config", "/nonexistent/idda.cfg"]);
    // Usage errors never create a run directory.
    assert_eq!(fs::read_dir(out.path()).unwrap().count(), 0);
}

#[test]
fn runtime_failures_exit_with_two() {
    let out = tempfile::tempdir().unwrap();
    let o = idda(out.path(), &["train", "--data.benchmark=digits", "--data.dir=/nonexistent"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=runtime message=\""), "{err}");
}

#[test]
fn ablate_emits_one_row_per_method_and_seed() {
    let out = tempfile::tempdir().unwrap();
    let dir = run_ok(out.path(), &small("ablate", &["--run.seeds=0..2", "--train.epochs=1"]));
    let text = fs::read_to_string(dir.join("records.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for m in ["source_only", "binary", "informative", "two_n", "parent_label", "confidence_filtered"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some(m)).count(), 2, "{m}");
    }
}

#[test]
fn sweep_emits_one_row_per_lambda() {
    let out = tempfile::tempdir().unwrap();
    let dir = run_ok(out.path(), &small("sweep", &["--train.epochs=1"]));
    assert_eq!(csv_rows(&dir.join("sweep.csv")), 8);
    let o = idda(out.path(), &["sweep", "--train.method=source_only"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_and_analyze_read_checkpoints() {
    let out = tempfile::tempdir().unwrap();
    let trained = run_ok(out.path(), &small("train", &["--run.seeds=1"]));
    let ckpt = format!("--eval.checkpoint={}", trained.join("seed_1/final.ckpt").display());
    let eval = run_ok(out.path(), &small("eval", &[&ckpt]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let run = &report["value"]["runs"][0];
    assert_eq!(run["seed"], 1);
    assert!(run["target"]["accuracy"].as_f64().unwrap() <= 1.0);

    let analyzed = run_ok(out.path(), &small("analyze", &[&ckpt, "--analyze.blind=true"]));
    let features = fs::read_to_string(analyzed.join("features_seed_1.csv")).unwrap();
    assert!(features.starts_with("domain,label,f0,"));
    assert!(features.lines().filter(|l| l.starts_with("target,")).all(|l| l.starts_with("target,-1,")));
    assert_eq!(features.lines().count(), 1 + 48 + 48);
}

#[test]
fn gen_data_is_reloadable() {
    let out = tempfile::tempdir().unwrap();
    let dir = run_ok(
        out.path(),
        &small("gen-data", &["--data.benchmark=two_moons", "--data.noise=0.2", "--run.seeds=7"]),
    );
    let data = idda::data::DomainData::load(dir.join("data_seed_7.idt")).unwrap();
    assert_eq!((data.source.len(), data.target.len()), (48, 48));
    let err = usage_error(out.path(), &["gen-data", "--data.benchmark=two_moons", "--data.radius=2"]);
    assert!(err.contains("key=data.radius"), "{err}");
}

#[test]
fn run_out_is_used_without_the_environment_override() {
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_idda"))
        .args(["gen-data", &format!("--run.out={}", out.path().display())])
        .env_remove("IDDA_OUT")
        .output()
        .unwrap();
    assert!(o.status.success());
    let dir = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    assert!(dir.starts_with(out.path()) && dir.join("manifest.json").exists());
}
