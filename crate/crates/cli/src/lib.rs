//! Command-line driver: `lpqlab <experiment> --config FILE`.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 1 for failures while
//! running.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use config::{ExperimentConfig, ExperimentKind};
use experiments::RunError;
use output::OutputDir;

#[derive(Debug, Parser)]
#[command(
    name = "lpqlab",
    version,
    about = "Monte Carlo experiments for SDEs with L_{p,q} drift"
)]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub experiment: ExperimentKind,
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Parses `argv` (including the program name) and runs the experiment.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match execute(&args) {
        Ok(()) => EXIT_OK,
        Err(RunError::Config(e)) => {
            eprintln!("configuration error: {e}");
            EXIT_CONFIG
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn execute(args: &Args) -> Result<(), RunError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if let Some(kind) = cfg.experiment {
        if kind != args.experiment {
            return Err(config::ConfigError(format!(
                "{}: config is for experiment `{kind}`, not `{}`",
                args.config.display(),
                args.experiment
            ))
            .into());
        }
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let threads = match args.threads {
        Some(0) => return Err(config::ConfigError("--threads must be >= 1".into()).into()),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Runtime(format!("cannot start thread pool: {e}")))?;
    log::info!("running {} with seed {seed}", args.experiment);
    let outputs = pool.install(|| experiments::run(args.experiment, &cfg, seed))?;
    let dir = OutputDir::create(&out_dir, &cfg.hash(), seed)
        .map_err(|e| RunError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let io_err = |e: std::io::Error| RunError::Runtime(format!("writing output: {e}"));
    for t in &outputs.tables {
        let path = dir.write_table(t).map_err(io_err)?;
        log::info!("wrote {}", path.display());
    }
    for p in &outputs.plots {
        let path = dir.write_plot(p).map_err(io_err)?;
        log::info!("wrote {}", path.display());
    }
    for line in &outputs.summary {
        println!("{line}");
    }
    Ok(())
}
