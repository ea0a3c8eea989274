//! `idda`: train, evaluate and analyze informative-discriminator domain adaptation.

mod config;
mod run;

use std::process::ExitCode;

use config::{describe_keys, Settings, UsageError};

const USAGE: &str = "usage: idda <train|eval|sweep|ablate|analyze|gen-data|keys> [--config FILE] [--key=value ...]";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Sweep,
    Ablate,
    Analyze,
    GenData,
}

impl Command {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "train" => Command::Train,
            "eval" => Command::Eval,
            "sweep" => Command::Sweep,
            "ablate" => Command::Ablate,
            "analyze" => Command::Analyze,
            "gen-data" => Command::GenData,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
            Command::Ablate => "ablate",
            Command::Analyze => "analyze",
            Command::GenData => "gen-data",
        }
    }
}

/// Parses arguments; the config file applies first, flags override it in order.
fn parse_args(args: &[String]) -> Result<(Command, Settings), UsageError> {
    let (cmd, rest) = args.split_first().ok_or_else(|| UsageError::new(USAGE))?;
    let cmd = Command::parse(cmd).ok_or_else(|| {
        UsageError::new(format!(
            "unknown command `{cmd}`; allowed: train, eval, sweep, ablate, analyze, gen-data, keys"
        ))
    })?;
    let mut file = None;
    let mut flags = Vec::new();
    let mut it = rest.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            file = Some(it.next().ok_or_else(|| UsageError::at("--config", "missing file name"))?.clone());
        } else if let Some(f) = a.strip_prefix("--config=") {
            file = Some(f.to_string());
        } else if let Some(kv) = a.strip_prefix("--") {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| UsageError::at(kv, "flags take the form --key=value"))?;
            flags.push((k.to_string(), v.to_string()));
        } else {
            return Err(UsageError::new(format!("unexpected argument `{a}`; {USAGE}")));
        }
    }
    let mut settings = Settings::default();
    if let Some(f) = file {
        let text = std::fs::read_to_string(&f)
            .map_err(|e| UsageError::at("--config", format!("cannot read {f}: {e}")))?;
        settings.apply_text(&text)?;
    }
    for (k, v) in flags {
        settings.set(&k, &v)?;
    }
    Ok((cmd, settings))
}

/// One line, `error kind=<usage|runtime> [key=<key>] message=<json string>`.
fn error_line(kind: &str, key: Option<&str>, message: &str) -> String {
    let key = key.map(|k| format!(" key={k}")).unwrap_or_default();
    let msg = serde_json::to_string(message).unwrap_or_else(|_| "\"\"".into());
    format!("error kind={kind}{key} message={msg}")
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("keys") => {
            print!("{}", describe_keys());
            return ExitCode::SUCCESS;
        }
        Some("-h" | "--help" | "help") => {
            println!("{USAGE}");
            return ExitCode::SUCCESS;
        }
        _ => {}
    }
    let (cmd, settings) = match parse_args(&args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", error_line("usage", e.key.as_deref(), &e.message));
            return ExitCode::from(1);
        }
    };
    match run::execute(cmd, &settings) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(run::Failure::Usage(e)) => {
            eprintln!("{}", error_line("usage", e.key.as_deref(), &e.message));
            ExitCode::from(1)
        }
        Err(run::Failure::Runtime(e)) => {
            eprintln!("{}", error_line("runtime", None, &format!("{e:#}")));
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(a: &[&str]) -> Vec<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn flags_are_parsed_in_order() {
        let (cmd, s) = parse_args(&args(&["train", "--train.epochs=3", "--train.epochs=4"])).unwrap();
        assert_eq!(cmd, Command::Train);
        assert_eq!(s.to_text(), "train.epochs = 4\n");
    }

    #[test]
    fn bad_invocations_are_usage_errors() {
        assert!(parse_args(&[]).is_err());
        assert!(parse_args(&args(&["fly"])).is_err());
        assert!(parse_args(&args(&["train", "epochs"])).is_err());
        assert!(parse_args(&args(&["train", "--train.epochs"])).is_err());
        assert!(parse_args(&args(&["train", "--config"])).is_err());
    }

    #[test]
    fn error_line_is_one_line() {
        let l = error_line("usage", Some("a.b"), "bad\nvalue \"x\"");
        assert_eq!(l.lines().count(), 1);
        assert!(l.starts_with("error kind=usage key=a.b message=\""));
    }
}
