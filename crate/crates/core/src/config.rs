//! TOML experiment configuration.
//!
//! ```toml
//! [protocol]
//! M = 8          # or: slots = 8
//! R = 8
//! W = 8
//!
//! [network]
//! N = 16
//! bi_count = 2000
//! run_count = 100
//! seed = 1
//! warmup_bi = 500
//!
//! [sweep]        # optional; empty lists fall back to the scalar values
//! N = [4, 8, 12, 16, 20, 24, 28, 32]
//! M = [8, 12, 16]
//!
//! [validate]     # optional
//! balance_tol = 1e-10
//! ```
//!
//! Unknown sections and keys are rejected. Settings are layered as: built-in
//! defaults, then the file, then the preset, then `key=value` overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::domain::{self, NetworkConfig, ProtocolParams, ValidationError};
use crate::sim::Grid;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Grid lists for sweeps. An empty list means "the scalar value".
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(alias = "N")]
    pub stations: Vec<u32>,
    #[serde(alias = "M")]
    pub slots: Vec<u32>,
    #[serde(alias = "R")]
    pub retry_limits: Vec<u32>,
    #[serde(alias = "W")]
    pub contention_windows: Vec<u32>,
}

/// Knobs of the self-check suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    /// Largest per-entry `|pi P - pi|` accepted by the balance suite.
    pub balance_tol: f64,
    /// Largest relative gap between the truncated and closed-form latency.
    pub latency_rel_tol: f64,
    /// Replications per oracle-suite instance.
    pub oracle_runs: u32,
    /// Beacon intervals per oracle-suite replication.
    pub oracle_bi: u64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { balance_tol: 1e-10, latency_rel_tol: 1e-6, oracle_runs: 200, oracle_bi: 5_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub protocol: ProtocolParams,
    pub network: NetworkConfig,
    pub sweep: SweepSection,
    pub validate: ValidateSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        domain::validate(&self.protocol, &self.network)
    }

    /// The sweep grid with empty lists replaced by the scalar settings.
    pub fn grid(&self) -> Grid {
        let or = |v: &Vec<u32>, x: u32| if v.is_empty() { vec![x] } else { v.clone() };
        Grid {
            stations: or(&self.sweep.stations, self.network.stations),
            slots: or(&self.sweep.slots, self.protocol.slots),
            retry_limits: or(&self.sweep.retry_limits, self.protocol.retry_limit),
            contention_windows: or(&self.sweep.contention_windows, self.protocol.contention_window),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        ConfigBuilder::from_toml(text)?.build()
    }
}

/// Monte Carlo scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 1000 runs x 10,000 beacon intervals.
    Paper,
    /// 100 runs x 2,000 beacon intervals.
    Desk,
}

impl Preset {
    pub fn bi_count(self) -> u64 {
        match self {
            Preset::Paper => 10_000,
            Preset::Desk => 2_000,
        }
    }

    pub fn run_count(self) -> u32 {
        match self {
            Preset::Paper => 1_000,
            Preset::Desk => 100,
        }
    }

    pub fn warmup_bi(self) -> u64 {
        500
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("unknown preset `{other}` (expected paper or desk)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

/// `(section, canonical key, accepted spellings)`.
const KEYS: &[(&str, &str, &[&str])] = &[
    ("protocol", "slots", &["slots", "M"]),
    ("protocol", "retry_limit", &["retry_limit", "R"]),
    ("protocol", "contention_window", &["contention_window", "W"]),
    ("protocol", "frames_per_slot", &["frames_per_slot", "F"]),
    ("protocol", "beacon_interval", &["beacon_interval", "T_BI"]),
    ("protocol", "ssw_duration", &["ssw_duration", "T_SSW"]),
    ("protocol", "max_retry_limit", &["max_retry_limit", "R_max"]),
    ("protocol", "max_contention_window", &["max_contention_window", "W_max"]),
    ("network", "stations", &["stations", "N"]),
    ("network", "bi_count", &["bi_count"]),
    ("network", "run_count", &["run_count"]),
    ("network", "seed", &["seed"]),
    ("network", "warmup_bi", &["warmup_bi"]),
    ("sweep", "stations", &["stations", "N"]),
    ("sweep", "slots", &["slots", "M"]),
    ("sweep", "retry_limits", &["retry_limits", "R"]),
    ("sweep", "contention_windows", &["contention_windows", "W"]),
    ("validate", "balance_tol", &["balance_tol"]),
    ("validate", "latency_rel_tol", &["latency_rel_tol"]),
    ("validate", "oracle_runs", &["oracle_runs"]),
    ("validate", "oracle_bi", &["oracle_bi"]),
];

/// Layers file contents, preset and overrides before typed parsing.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    table: Table,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(Self { table })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn set(&mut self, section: &str, canonical: &str, value: Value) -> Result<(), ConfigError> {
        let spellings = KEYS
            .iter()
            .find(|(s, c, _)| *s == section && *c == canonical)
            .map(|(_, _, a)| *a)
            .ok_or_else(|| ConfigError::UnknownKey(format!("{section}.{canonical}")))?;
        let entry = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(sec) = entry else {
            return Err(ConfigError::Parse(format!("`{section}` must be a table")));
        };
        for alias in spellings {
            sec.remove(*alias);
        }
        sec.insert(canonical.to_string(), value);
        Ok(())
    }

    pub fn preset(mut self, preset: Preset) -> Result<Self, ConfigError> {
        self.set("network", "bi_count", Value::Integer(preset.bi_count() as i64))?;
        self.set("network", "run_count", Value::Integer(i64::from(preset.run_count())))?;
        self.set("network", "warmup_bi", Value::Integer(preset.warmup_bi() as i64))?;
        Ok(self)
    }

    pub fn seed(mut self, seed: u64) -> Result<Self, ConfigError> {
        let value = i64::try_from(seed)
            .map(Value::Integer)
            .map_err(|_| ConfigError::BadOverride(format!("seed={seed} (must fit in i64)")))?;
        self.set("network", "seed", value)?;
        Ok(self)
    }

    /// Applies one `key=value` override. `key` may be `section.key` or a bare
    /// key; bare `N`, `M`, `R`, `W` with a list (`4,8,12`) or range
    /// (`4:32:4`) value target the sweep section.
    pub fn set_override(mut self, spec: &str) -> Result<Self, ConfigError> {
        let (key, raw) = spec
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, v)| !k.is_empty() && !v.is_empty())
            .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        let list = parse_list(raw).map_err(|_| ConfigError::BadOverride(spec.to_string()))?;

        let (section, name) = match key.split_once('.') {
            Some((s, n)) => (Some(s), n),
            None => (None, key),
        };
        let matches: Vec<&(&str, &str, &[&str])> = KEYS
            .iter()
            .filter(|(s, _, aliases)| section.is_none_or(|want| want == *s) && aliases.contains(&name))
            .collect();
        let target = match (section, matches.as_slice()) {
            (_, []) => return Err(ConfigError::UnknownKey(key.to_string())),
            (_, [one]) => *one,
            (None, many) => {
                let want = if list.is_some() { "sweep" } else { "protocol" };
                many.iter()
                    .find(|(s, _, _)| *s == want)
                    .or_else(|| many.iter().find(|(s, _, _)| *s == "network"))
                    .copied()
                    .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?
            }
            (Some(_), [first, ..]) => *first,
        };
        let value = match list {
            Some(items) if target.0 == "sweep" => {
                Value::Array(items.into_iter().map(Value::Integer).collect())
            }
            Some(_) => return Err(ConfigError::BadOverride(spec.to_string())),
            None if target.0 == "sweep" => Value::Array(vec![parse_scalar(raw)]),
            None => parse_scalar(raw),
        };
        self.set(target.0, target.1, value)?;
        Ok(self)
    }

    pub fn build(self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::deserialize(Value::Table(self.table)).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") {
                ConfigError::UnknownKey(msg.trim().to_string())
            } else {
                ConfigError::Parse(msg.trim().to_string())
            }
        })
    }
}

fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// `Some(items)` for `a,b,c` or `start:stop[:step]`; `None` for a scalar.
fn parse_list(raw: &str) -> Result<Option<Vec<i64>>, ()> {
    let raw = raw.trim_start_matches('[').trim_end_matches(']');
    if raw.contains(':') {
        let parts: Vec<i64> = raw.split(':').map(|s| s.trim().parse().map_err(|_| ())).collect::<Result<_, _>>()?;
        let (start, stop, step) = match parts.as_slice() {
            [a, b] => (*a, *b, 1),
            [a, b, c] if *c > 0 => (*a, *b, *c),
            _ => return Err(()),
        };
        if stop < start {
            return Err(());
        }
        return Ok(Some((start..=stop).step_by(step as usize).collect()));
    }
    if raw.contains(',') {
        let items = raw
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().map_err(|_| ()))
            .collect::<Result<Vec<i64>, ()>>()?;
        return Ok(Some(items));
    }
    Ok(None)
}
