//! `abft`: run the analytic model, the simulator, the tuner or the
//! self-checks from a TOML configuration.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abft_core::config::{ConfigBuilder, Preset};
use clap::Parser;

use commands::{CliError, Format, Mode};

/// Environment variable bounding the worker thread count.
const THREADS_ENV: &str = "ABFT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "abft", version, about = "802.11ad A-BFT contention model, simulator and tuner")]
struct Args {
    /// TOML configuration with [protocol], [network], [sweep] and [validate] sections.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    mode: Mode,

    /// Parameter override, e.g. `M=12`, `network.seed=3` or `N=4:32:4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    /// Monte Carlo scale, applied after the config file and before overrides.
    #[arg(long)]
    preset: Option<Preset>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// `table.csv` + `comparison` -> `table.comparison.csv`.
fn companion_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    out.with_file_name(name)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(args: Args) -> Result<(), CliError> {
    configure_threads()?;
    let mut builder = match &args.config {
        Some(path) => ConfigBuilder::from_file(path)?,
        None => ConfigBuilder::new(),
    };
    if let Some(preset) = args.preset {
        builder = builder.preset(preset)?;
    }
    for spec in &args.overrides {
        builder = builder.set_override(spec)?;
    }
    if let Some(seed) = args.seed {
        builder = builder.seed(seed)?;
    }
    let cfg = builder.build()?;

    let rendered = commands::execute(args.mode, &cfg, args.format)?;
    match &args.out {
        Some(path) => {
            write(path, &rendered.main)?;
            for (suffix, text) in &rendered.extra {
                write(&companion_path(path, suffix), text)?;
            }
        }
        None => {
            print!("{}", rendered.main);
            for (_, text) in &rendered.extra {
                print!("\n{text}");
            }
        }
    }
    if rendered.passed {
        Ok(())
    } else {
        Err(CliError::SuiteFailed)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abft: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
