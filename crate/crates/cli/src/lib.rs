//! Batch experiment runner: parses a flat key-value config, dispatches to
//! the solver / sensitivity / optimizer operations, and writes deterministic
//! reports and field dumps.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use freundlich::error::Error;

use config::{Command, ExperimentConfig, StudyKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;
pub const EXIT_VERIFY_FAILED: i32 = 5;

pub const USAGE: &str = "usage: freundlich <command> [study-kind] [--config <path>] [--out <dir>] [--seed <int>]
commands: solve | differentiate | optimize | verify | study {frechet|deadzone|convergence}";

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::NonConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

fn parse_command(args: &[String]) -> Result<(Command, usize), String> {
    let first = args.first().ok_or_else(|| "missing command".to_string())?;
    match first.as_str() {
        "solve" => Ok((Command::Solve, 1)),
        "differentiate" => Ok((Command::Differentiate, 1)),
        "optimize" => Ok((Command::Optimize, 1)),
        "verify" => Ok((Command::Verify, 1)),
        "study" => {
            let kind = args
                .get(1)
                .ok_or_else(|| "study needs a kind: frechet | deadzone | convergence".to_string())?;
            let kind = match kind.as_str() {
                "frechet" => StudyKind::Frechet,
                "deadzone" => StudyKind::Deadzone,
                "convergence" => StudyKind::Convergence,
                other => return Err(format!("unknown study kind `{other}`")),
            };
            Ok((Command::Study(kind), 2))
        }
        other => Err(format!("unknown command `{other}`")),
    }
}

/// Run with CLI arguments (excluding the program name); returns the exit
/// status, printing the report to stdout and diagnostics to stderr.
pub fn run_cli(args: &[String]) -> i32 {
    let (command, mut idx) = match parse_command(args) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            return EXIT_USAGE;
        }
    };

    let mut config_path: Option<PathBuf> = None;
    let mut out_override: Option<PathBuf> = None;
    let mut seed_override: Option<u64> = None;
    while idx < args.len() {
        let flag = &args[idx];
        let value = args.get(idx + 1);
        match (flag.as_str(), value) {
            ("--config", Some(v)) => config_path = Some(PathBuf::from(v)),
            ("--out", Some(v)) => out_override = Some(PathBuf::from(v)),
            ("--seed", Some(v)) => match v.parse() {
                Ok(s) => seed_override = Some(s),
                Err(_) => {
                    eprintln!("error: bad --seed value `{v}`");
                    return EXIT_USAGE;
                }
            },
            _ => {
                eprintln!("error: unexpected argument `{flag}`");
                eprintln!("{USAGE}");
                return EXIT_USAGE;
            }
        }
        idx += 2;
    }

    let mut cfg = match config_path {
        Some(path) => match ExperimentConfig::load(command, &path) {
            Ok(cfg) => cfg,
            Err(err) => {
                eprintln!("error: {err}");
                return exit_code_for(&err);
            }
        },
        None => ExperimentConfig::defaults(command),
    };
    if let Some(out) = out_override {
        cfg.out = out;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }

    match commands::run(&cfg) {
        Ok(report) => {
            if let Err(err) = report.write_to(&cfg.out) {
                eprintln!("error: {err}");
                return EXIT_IO;
            }
            print!("{}", report.render());
            if report.failures().is_empty() {
                EXIT_OK
            } else {
                EXIT_VERIFY_FAILED
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
