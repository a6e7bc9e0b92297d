use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use topcut::report::{self, summarize};
use topcut::{BackendConfig, BackendKind, Component, EngineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

/// Solve Team Orienteering instances to optimality with a cutting-plane
/// loop and report bounds per instance and per data set.
#[derive(Debug, Parser)]
#[command(name = "topcut", version)]
struct Args {
    /// Instance files or directories of `.txt` instances.
    #[arg(required = true)]
    paths: Vec<PathBuf>,

    /// Overall limit per instance, in seconds.
    #[arg(long, default_value_t = 7200.0)]
    time_limit: f64,

    /// Budget of the cut-generation stages per instance, in seconds.
    #[arg(long, default_value_t = 3600.0)]
    cut_time_limit: f64,

    /// Limit for each auxiliary solve inside cut generation, in seconds.
    #[arg(long, default_value_t = 5.0)]
    probe_time_limit: f64,

    #[arg(long, default_value_t = BackendKind::Builtin)]
    backend: BackendKind,

    /// Command run by the external backend.
    #[arg(long)]
    external_command: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Turn a component off; repeatable.
    #[arg(long, value_name = "COMPONENT")]
    disable: Vec<Component>,

    /// Directory for cached incompatibility graphs.
    #[arg(long)]
    cache_dir: Option<PathBuf>,

    /// Format written to standard output.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Also write the records as CSV to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn seconds(s: f64, flag: &str) -> anyhow::Result<Duration> {
    Duration::try_from_secs_f64(s).with_context(|| format!("--{flag} must be a non-negative number of seconds"))
}

fn config(args: &Args) -> anyhow::Result<EngineConfig> {
    let mut cfg = EngineConfig {
        time_limit: Some(seconds(args.time_limit, "time-limit")?),
        cut_time_limit: seconds(args.cut_time_limit, "cut-time-limit")?,
        probe_time_limit: seconds(args.probe_time_limit, "probe-time-limit")?,
        backend: BackendConfig { kind: args.backend, external_command: args.external_command.clone() },
        seed: args.seed,
        cache_dir: args.cache_dir.clone(),
        ..EngineConfig::default()
    };
    for &c in &args.disable {
        cfg = cfg.disable(c);
    }
    Ok(cfg)
}

fn run(args: Args) -> anyhow::Result<bool> {
    let cfg = config(&args)?;
    let records = report::run(&args.paths, &cfg);
    let mut out = io::stdout().lock();
    match args.format {
        Format::Csv => report::write_csv(&mut out, &records)?,
        Format::Text => {
            write!(out, "{}", report::text_table(&records))?;
            writeln!(out)?;
            write!(out, "{}", report::summary_table(&summarize(&records)))?;
        }
    }
    if let Some(path) = &args.csv {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report::write_csv(f, &records)?;
    }
    Ok(records.iter().all(|r| r.error.is_none()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
