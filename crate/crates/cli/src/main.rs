mod analyze;
mod args;
mod config;
mod models;
mod report;
mod simulate;
mod sweep;

use std::io::Write;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;

use args::{Cli, Command, Format};
use config::FileConfig;
use report::Report;

/// A diagnostic and its exit code: 2 for bad input, 3 for an internal
/// invariant failure.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn user(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<tas_ema::Error> for Failure {
    fn from(e: tas_ema::Error) -> Self {
        if e.is_internal() {
            Self::internal(e.to_string())
        } else {
            Self::user(e.to_string())
        }
    }
}

/// A report to emit, and the failure to exit with after emitting it.
pub struct Outcome {
    pub report: Report,
    pub failure: Option<Failure>,
}

impl Outcome {
    pub fn ok(report: Report) -> Self {
        Self {
            report,
            failure: None,
        }
    }
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("error: {}", f.message.lines().next().unwrap_or_default());
    ExitCode::from(f.code)
}

fn dispatch(cli: &Cli, config: &FileConfig) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Analyze(a) => analyze::run(a, config),
        Command::Simulate(a) => simulate::run_simulate(a, config),
        Command::Verify(a) => simulate::run_verify(a, config),
        Command::Sweep(a) => sweep::run(a, config),
        Command::ModelReport(a) => models::run_report(a, config),
        Command::Presets => models::run_presets(config),
    }
}

fn emit(cli: &Cli, report: &Report) -> Result<(), Failure> {
    let default = match cli.command {
        Command::Sweep(_) => Format::Csv,
        _ => Format::Table,
    };
    let timestamp = cli
        .output
        .timestamps
        .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    let text = report.render(cli.output.format.unwrap_or(default), timestamp)?;
    match &cli.output.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::user(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::user(format!("cannot write to stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // clap spreads one diagnostic over several lines; keep it on one
            let rendered = e.to_string();
            let line: Vec<&str> = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty() && !l.starts_with("tip:"))
                .collect();
            eprintln!("{}", line.join(" "));
            return ExitCode::from(2);
        }
    };
    let result = FileConfig::load(cli.output.config.as_deref())
        .and_then(|config| dispatch(&cli, &config));
    match result {
        Ok(outcome) => {
            if let Err(f) = emit(&cli, &outcome.report) {
                return fail(&f);
            }
            match outcome.failure {
                Some(f) => fail(&f),
                None => ExitCode::SUCCESS,
            }
        }
        Err(f) => fail(&f),
    }
}
