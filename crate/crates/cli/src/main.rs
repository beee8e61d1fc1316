//! `satc`: calibrate, rank, simulate and serve.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 when the inputs
//! cannot be processed. Failures print one diagnostic line on stderr.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};

use satc_core::ranking::{Method, Strategy};
use satc_core::Averaging;

#[derive(Debug, Parser)]
#[command(
    name = "satc",
    version,
    about = "Ranking and evaluation for semi-automated text classification"
)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct GlobalOpts {
    /// Dataset bundle: a directory holding bundle.toml, or the manifest itself.
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,

    /// Weight of recall relative to precision in F_beta.
    #[arg(long, global = true, default_value_t = 1.0, value_parser = positive)]
    beta: f64,

    /// Averaging used for gains and calibration.
    #[arg(long, global = true, default_value = "macro", value_parser = averaging_parser())]
    averaging: Averaging,

    #[arg(long, global = true, default_value = "utheoretic", value_parser = method_parser())]
    method: Method,

    #[arg(long, global = true, default_value = "static", value_parser = strategy_parser())]
    strategy: Strategy,

    /// Expected validated fraction of the test set; repeatable.
    #[arg(long = "xi", global = true, value_parser = fraction, default_values_t = [0.05, 0.1, 0.2])]
    xi: Vec<f64>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Calibration grid: `low:high:count` (log-spaced) or a comma list.
    #[arg(long, global = true)]
    grid: Option<String>,

    /// Fixed calibration growth rate, bypassing the grid search.
    #[arg(long, global = true, value_parser = positive)]
    sigma: Option<f64>,

    /// Monte Carlo trials for random-baseline.
    #[arg(long, global = true, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    /// Number of random parts for split-simulate.
    #[arg(long, global = true, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    parts: u64,

    /// Output directory.
    #[arg(long, global = true, env = "SATC_OUT_DIR", default_value = "satc-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the calibration growth rate on the bundle's CV scores and print it.
    Calibrate,
    /// Write the static ranking of the test set.
    Rank,
    /// Run the evaluation protocol and write curves and a report.
    Simulate,
    /// Estimate the expected curves and ENER of random rankings.
    RandomBaseline,
    /// Simulate on random parts of the test set and average the curves.
    SplitSimulate,
    /// Start the validation session service.
    Serve(ServeOpts),
    /// Write a synthetic bundle with gold labels and CV scores.
    Synth(SynthOpts),
}

#[derive(Debug, Clone, Args)]
struct ServeOpts {
    #[arg(long, env = "SATC_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory whose subdirectories are bundles addressable by name.
    #[arg(long, env = "SATC_BUNDLE_ROOT", default_value = ".")]
    bundle_root: PathBuf,
    /// Directory for session logs.
    #[arg(long, env = "SATC_DATA_DIR", default_value = "satc-data")]
    data_dir: PathBuf,
    /// Seconds of inactivity before a session leaves memory.
    #[arg(long, env = "SATC_SESSION_TTL", default_value_t = 1800)]
    ttl_secs: u64,
}

#[derive(Debug, Clone, Args)]
struct SynthOpts {
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 3000)]
    n_train: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    classes: u64,
    /// Fraction of documents positive for each class.
    #[arg(long, default_value_t = 0.1, value_parser = open_fraction)]
    prevalence: f64,
    /// Fraction of wrong decisions.
    #[arg(long, default_value_t = 0.1, value_parser = open_fraction)]
    error_rate: f64,
}

fn averaging_parser() -> impl TypedValueParser<Value = Averaging> {
    PossibleValuesParser::new(["macro", "micro"]).map(|s| s.parse::<Averaging>().expect("listed value"))
}

fn method_parser() -> impl TypedValueParser<Value = Method> {
    PossibleValuesParser::new(Method::ALL.map(Method::as_str)).map(|s| s.parse::<Method>().expect("listed value"))
}

fn strategy_parser() -> impl TypedValueParser<Value = Strategy> {
    PossibleValuesParser::new(["static", "dynamic"]).map(|s| s.parse::<Strategy>().expect("listed value"))
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} must be positive"))
    }
}

/// A value in (0, 1].
fn fraction(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} must lie in (0, 1]"))
    }
}

/// A value in (0, 1).
fn open_fraction(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} must lie in (0, 1)"))
    }
}

/// A flag combination that parses but makes no sense for the command.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// The error chain on one line, skipping causes already spelled out by
/// the message that wraps them.
fn one_line(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string().replace('\n', " ");
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some();
            eprintln!("satc: {}", one_line(&e));
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
