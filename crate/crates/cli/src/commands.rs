use std::fmt;

use abft_core::analytic::{self, AnalyticError};
use abft_core::config::ExperimentConfig;
use abft_core::optimize;
use abft_core::output::{self, OptimizeOutput, PointReport, SlotOptimumRow, SweepPoint};
use abft_core::sim::{self, GridPoint};
use abft_core::suites;
use abft_core::{ConfigError, ValidationError};
use log::info;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Analytic,
    Simulate,
    Validate,
    Optimize,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
    SuiteFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::SuiteFailed => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::SuiteFailed => write!(f, "validation failed"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Config(format!("{e} [{}]", e.codes().join(",")))
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

/// Rendered output: the main document plus named companion files.
pub struct Rendered {
    pub main: String,
    /// `(file suffix, contents)`.
    pub extra: Vec<(&'static str, String)>,
    pub passed: bool,
}

impl Rendered {
    fn single(main: String) -> Self {
        Self { main, extra: Vec::new(), passed: true }
    }
}

/// Every grid point must be a valid configuration on its own.
fn checked_points(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>, CliError> {
    cfg.validate()?;
    let points = cfg.grid().points();
    if points.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    for pt in &points {
        abft_core::domain::validate(&pt.apply(&cfg.protocol), &cfg.network.with_stations(pt.stations))?;
    }
    Ok(points)
}

pub fn execute(mode: Mode, cfg: &ExperimentConfig, format: Format) -> Result<Rendered, CliError> {
    match mode {
        Mode::Analytic => analytic_cmd(cfg, format),
        Mode::Simulate => simulate_cmd(cfg, format),
        Mode::Sweep => sweep_cmd(cfg, format),
        Mode::Validate => validate_cmd(cfg, format),
        Mode::Optimize => optimize_cmd(cfg, format),
    }
}

fn analytic_cmd(cfg: &ExperimentConfig, format: Format) -> Result<Rendered, CliError> {
    let rows = checked_points(cfg)?
        .into_iter()
        .map(|pt| Ok((pt, analytic::report(&pt.apply(&cfg.protocol), pt.stations)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Rendered::single(match format {
        Format::Csv => output::analytic_csv(&rows),
        Format::Json => output::to_json(
            &rows.iter().map(|(point, report)| PointReport { point: *point, report }).collect::<Vec<_>>(),
        ),
    }))
}

fn simulate_cmd(cfg: &ExperimentConfig, format: Format) -> Result<Rendered, CliError> {
    checked_points(cfg)?;
    info!(
        "simulating {} point(s), {} runs x {} BIs",
        cfg.grid().points().len(),
        cfg.network.run_count,
        cfg.network.bi_count
    );
    let rows = sim::sweep(&cfg.protocol, &cfg.grid(), &cfg.network)?;
    Ok(Rendered::single(match format {
        Format::Csv => output::sim_csv(&rows),
        Format::Json => output::to_json(
            &rows.iter().map(|(point, report)| PointReport { point: *point, report }).collect::<Vec<_>>(),
        ),
    }))
}

fn sweep_cmd(cfg: &ExperimentConfig, format: Format) -> Result<Rendered, CliError> {
    checked_points(cfg)?;
    let sims = sim::sweep(&cfg.protocol, &cfg.grid(), &cfg.network)?;
    let rows = sims
        .into_iter()
        .map(|(pt, s)| Ok((pt, analytic::report(&pt.apply(&cfg.protocol), pt.stations)?, s)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Rendered::single(match format {
        Format::Csv => output::sweep_csv(&rows),
        Format::Json => output::to_json(
            &rows
                .iter()
                .map(|(point, analytic, simulated)| SweepPoint { point: *point, analytic, simulated })
                .collect::<Vec<_>>(),
        ),
    }))
}

fn validate_cmd(cfg: &ExperimentConfig, format: Format) -> Result<Rendered, CliError> {
    cfg.validate()?;
    let report = suites::run_all(&cfg.protocol, &cfg.validate, cfg.network.seed);
    for s in &report.suites {
        info!("{}: {} ({} checks)", s.name, if s.passed { "pass" } else { "FAIL" }, s.checks);
    }
    let main = match format {
        Format::Csv => output::validation_csv(&report),
        Format::Json => output::to_json(&report),
    };
    Ok(Rendered { main, extra: Vec::new(), passed: report.passed })
}

fn optimize_cmd(cfg: &ExperimentConfig, format: Format) -> Result<Rendered, CliError> {
    let grid = cfg.grid();
    checked_points(cfg)?;
    let table = optimize::build_table(&cfg.protocol, &grid.stations, &grid.slots)?;
    let comparison = optimize::compare(&cfg.protocol, &table)?;
    Ok(match format {
        Format::Csv => Rendered {
            main: output::table_csv(&table),
            extra: vec![("comparison", output::comparison_csv(&comparison))],
            passed: true,
        },
        Format::Json => {
            let slot_optimum = grid
                .stations
                .iter()
                .map(|&n| {
                    Ok(SlotOptimumRow {
                        stations: n,
                        retry_limit: cfg.protocol.retry_limit,
                        contention_window: cfg.protocol.contention_window,
                        optimum: optimize::optimal_slot_count(&cfg.protocol, n)?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Rendered::single(output::to_json(&OptimizeOutput {
                table: &table.rows,
                comparison: &comparison,
                slot_optimum: &slot_optimum,
            }))
        }
    })
}
