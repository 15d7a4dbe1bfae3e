//! Command-line front end: load a corpus, run the selected suites, and emit
//! the report as text or JSON.
//!
//! Exit codes: 0 when every expectation matched and no battery was
//! inconsistent, 1 on a mismatch or inconsistency, 2 on a usage error, 3 when
//! the corpus fails to parse or validate.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vargeo::corpus;
use vargeo::harness::{self, Command, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "vargeo",
    version,
    about = "Diagnostic suites for the variational geometry of set-valued maps"
)]
struct Args {
    /// Suite to run: diagnose, regularity, prox, survey, or all.
    #[arg(long, default_value = "all")]
    command: String,

    /// Corpus file; the built-in corpus is used when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,

    /// Seed every sampled computation derives from.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Set-equality tolerance for the verdict batteries.
    #[arg(long = "tol-eq")]
    tol_eq: Option<f64>,

    /// Write the report to this file instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_parser = ["text", "json"], default_value = "text")]
    format: String,

    /// Record wall-clock milliseconds per instance. Timed reports are no
    /// longer byte-for-byte reproducible.
    #[arg(long)]
    timings: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let command = match Command::parse(&args.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vargeo: {e}");
            return ExitCode::from(2);
        }
    };

    let mut config: RunConfig<f64> = RunConfig::default();
    config.seed = args.seed;
    config.timings = args.timings;
    if let Some(tol) = args.tol_eq {
        if !tol.is_finite() || tol <= 0.0 {
            eprintln!("vargeo: --tol-eq must be a positive finite number, got {tol}");
            return ExitCode::from(2);
        }
        config.tol_eq = tol;
    }

    let corpus = match &args.corpus {
        Some(path) => corpus::load_corpus::<f64>(path),
        None => corpus::parse_corpus::<f64>(corpus::builtin_corpus_text()),
    };
    let corpus = match corpus {
        Ok(instances) => instances,
        Err(e) => {
            eprintln!("vargeo: {e}");
            return ExitCode::from(3);
        }
    };

    let report = harness::run(command, &corpus, &config);
    let rendered = match args.format.as_str() {
        "json" => report.to_json(),
        _ => report.to_text(),
    };
    if let Some(path) = &args.report {
        if let Err(e) = std::fs::write(path, &rendered) {
            eprintln!("vargeo: cannot write report to {}: {e}", path.display());
            return ExitCode::from(2);
        }
    } else {
        print!("{rendered}");
    }

    if report.clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
