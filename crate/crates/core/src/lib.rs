//! Model, simulator and tuner for 802.11ad A-BFT slot contention.
//!
//! Each station in the associated beamforming training period picks one of
//! `M` slots at random. After `R` consecutive collisions it backs off for a
//! uniform number of beacon intervals in `[0, W)`. This crate provides the
//! mean-field Markov analysis of that rule ([`analytic`]), a Monte Carlo
//! simulator ([`sim`]), an exact joint-chain solver for tiny networks
//! ([`oracle`]) and a density-aware `(R, W)` tuner ([`optimize`]).

pub mod analytic;
pub mod config;
pub mod domain;
pub mod optimize;
pub mod oracle;
pub mod output;
pub mod sim;
pub mod stats;
pub mod suites;

pub use analytic::{AnalyticError, AnalyticReport};
pub use config::{ConfigBuilder, ConfigError, ExperimentConfig, Preset};
pub use domain::{NetworkConfig, ProtocolParams, StationState, ValidationError, Violation};
pub use sim::{GridPoint, SimReport};
