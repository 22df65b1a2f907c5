//! Protocol knobs, network/simulation controls and their validation.
//!
//! Field names are descriptive; the serde aliases accept the usual symbols
//! (`M`, `R`, `W`, `F`, `T_BI`, `T_SSW`, `R_max`, `W_max`, `N`) so that config
//! files and `--set` overrides can use either spelling.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tunable A-BFT protocol parameters plus the search bounds for tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    /// Number of A-BFT slots per beacon interval (`M`).
    #[serde(alias = "M")]
    pub slots: u32,
    /// Consecutive-collision count that triggers random backoff (`R`).
    #[serde(alias = "R")]
    pub retry_limit: u32,
    /// Size of the uniform backoff support `{0, .., W-1}` (`W`).
    #[serde(alias = "W")]
    pub contention_window: u32,
    /// SSW frames sent per A-BFT slot (`F`).
    #[serde(alias = "F")]
    pub frames_per_slot: u32,
    /// Beacon interval in seconds (`T_BI`).
    #[serde(alias = "T_BI")]
    pub beacon_interval: f64,
    /// SSW frame duration in seconds (`T_SSW`).
    #[serde(alias = "T_SSW")]
    pub ssw_duration: f64,
    /// Upper bound on `R` for tuning (`R_max`).
    #[serde(alias = "R_max")]
    pub max_retry_limit: u32,
    /// Upper bound on `W` for tuning (`W_max`).
    #[serde(alias = "W_max")]
    pub max_contention_window: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            slots: 8,
            retry_limit: 8,
            contention_window: 8,
            frames_per_slot: 16,
            beacon_interval: 0.1,
            ssw_duration: 15.8e-6,
            max_retry_limit: 20,
            max_contention_window: 20,
        }
    }
}

impl ProtocolParams {
    /// Fraction of a beacon interval spent on one successful sweep,
    /// `F * T_SSW / T_BI`.
    pub fn alpha(&self) -> f64 {
        self.sweep_duration() / self.beacon_interval
    }

    /// Time spent by a successful sector sweep, `F * T_SSW`, in seconds.
    pub fn sweep_duration(&self) -> f64 {
        f64::from(self.frames_per_slot) * self.ssw_duration
    }

    pub fn with_slots(mut self, slots: u32) -> Self {
        self.slots = slots;
        self
    }

    pub fn with_retry_limit(mut self, retry_limit: u32) -> Self {
        self.retry_limit = retry_limit;
        self
    }

    pub fn with_contention_window(mut self, contention_window: u32) -> Self {
        self.contention_window = contention_window;
        self
    }

    /// Collects every violated protocol invariant.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.slots < 1 {
            out.push(Violation::SlotsZero);
        }
        if self.retry_limit < 1 {
            out.push(Violation::RetryLimitZero);
        }
        if self.contention_window < 1 {
            out.push(Violation::ContentionWindowZero);
        }
        if self.frames_per_slot < 1 {
            out.push(Violation::FramesPerSlotZero);
        }
        let durations_ok = self.beacon_interval > 0.0 && self.ssw_duration > 0.0;
        if !self.beacon_interval.is_finite() || self.beacon_interval <= 0.0 {
            out.push(Violation::BeaconIntervalNotPositive);
        }
        if !self.ssw_duration.is_finite() || self.ssw_duration <= 0.0 {
            out.push(Violation::SswDurationNotPositive);
        }
        if durations_ok && self.sweep_duration() >= self.beacon_interval {
            out.push(Violation::SweepExceedsBeaconInterval);
        }
        if self.retry_limit > self.max_retry_limit {
            out.push(Violation::RetryLimitExceedsMax);
        }
        if self.contention_window > self.max_contention_window {
            out.push(Violation::ContentionWindowExceedsMax);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ValidationError::from_list(self.violations())
    }
}

/// Number of stations plus Monte Carlo controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Number of contending stations (`N`).
    #[serde(alias = "N")]
    pub stations: u32,
    /// Beacon intervals per run, warmup included.
    pub bi_count: u64,
    /// Independent replications.
    pub run_count: u32,
    pub seed: u64,
    /// Leading beacon intervals excluded from measurement.
    pub warmup_bi: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            stations: 16,
            bi_count: 2_000,
            run_count: 100,
            seed: 1,
            warmup_bi: 500,
        }
    }
}

impl NetworkConfig {
    pub fn with_stations(mut self, stations: u32) -> Self {
        self.stations = stations;
        self
    }

    /// Beacon intervals that contribute to the statistics.
    pub fn measured_bi(&self) -> u64 {
        self.bi_count.saturating_sub(self.warmup_bi)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.stations < 1 {
            out.push(Violation::StationsZero);
        }
        if self.bi_count < 1 {
            out.push(Violation::BiCountZero);
        }
        if self.run_count < 1 {
            out.push(Violation::RunCountZero);
        }
        if self.warmup_bi >= self.bi_count {
            out.push(Violation::WarmupNotBelowBiCount);
        }
        out
    }
}

/// Per-station protocol state as seen at the start of a beacon interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StationState {
    /// Consecutive-collision counter, in `0..=R`.
    pub collisions: u32,
    /// Remaining backoff in beacon intervals, in `0..W`. Non-zero only when
    /// `collisions == R`.
    pub backoff: u32,
    /// Beacon interval in which the current training episode began.
    pub episode_start_bi: u64,
}

impl StationState {
    pub fn is_active(&self) -> bool {
        self.backoff == 0
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    SlotsZero,
    RetryLimitZero,
    ContentionWindowZero,
    FramesPerSlotZero,
    BeaconIntervalNotPositive,
    SswDurationNotPositive,
    SweepExceedsBeaconInterval,
    RetryLimitExceedsMax,
    ContentionWindowExceedsMax,
    StationsZero,
    BiCountZero,
    RunCountZero,
    WarmupNotBelowBiCount,
}

impl Violation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::SlotsZero => "M_ZERO",
            Violation::RetryLimitZero => "R_ZERO",
            Violation::ContentionWindowZero => "W_ZERO",
            Violation::FramesPerSlotZero => "F_ZERO",
            Violation::BeaconIntervalNotPositive => "T_BI_NOT_POSITIVE",
            Violation::SswDurationNotPositive => "T_SSW_NOT_POSITIVE",
            Violation::SweepExceedsBeaconInterval => "SWEEP_EXCEEDS_BI",
            Violation::RetryLimitExceedsMax => "R_EXCEEDS_R_MAX",
            Violation::ContentionWindowExceedsMax => "W_EXCEEDS_W_MAX",
            Violation::StationsZero => "N_ZERO",
            Violation::BiCountZero => "BI_COUNT_ZERO",
            Violation::RunCountZero => "RUN_COUNT_ZERO",
            Violation::WarmupNotBelowBiCount => "WARMUP_NOT_BELOW_BI_COUNT",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            Violation::SlotsZero => "M must be ≥ 1",
            Violation::RetryLimitZero => "R must be ≥ 1",
            Violation::ContentionWindowZero => "W must be ≥ 1",
            Violation::FramesPerSlotZero => "F must be ≥ 1",
            Violation::BeaconIntervalNotPositive => "T_BI must be > 0",
            Violation::SswDurationNotPositive => "T_SSW must be > 0",
            Violation::SweepExceedsBeaconInterval => "F·T_SSW must be < T_BI",
            Violation::RetryLimitExceedsMax => "R exceeds R_max",
            Violation::ContentionWindowExceedsMax => "W exceeds W_max",
            Violation::StationsZero => "N must be ≥ 1",
            Violation::BiCountZero => "bi_count must be ≥ 1",
            Violation::RunCountZero => "run_count must be ≥ 1",
            Violation::WarmupNotBelowBiCount => "warmup_bi must be < bi_count",
        };
        write!(f, "{}: {msg}", self.code())
    }
}

/// Every violation found in a configuration, in check order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {}", join(.0))]
pub struct ValidationError(pub Vec<Violation>);

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ValidationError {
    fn from_list(list: Vec<Violation>) -> Result<(), Self> {
        if list.is_empty() {
            Ok(())
        } else {
            Err(Self(list))
        }
    }

    pub fn violations(&self) -> &[Violation] {
        &self.0
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.0.iter().map(Violation::code).collect()
    }
}

/// Checks every protocol and network invariant and reports all violations.
pub fn validate(params: &ProtocolParams, net: &NetworkConfig) -> Result<(), ValidationError> {
    let mut list = params.violations();
    list.extend(net.violations());
    ValidationError::from_list(list)
}
