//! Monte Carlo simulator of A-BFT contention, one beacon interval per step.
//!
//! Each beacon interval:
//!
//! 1. stations with pending backoff count it down by one and stay silent;
//! 2. every other station picks a slot uniformly from `M`;
//! 3. a slot with a single claimant is a success: the counter resets and a
//!    new training episode starts in the next beacon interval;
//! 4. claimants of a shared slot collide: below `R - 1` the counter is
//!    incremented, otherwise the counter is set to (or stays at) `R` and a
//!    fresh backoff is drawn from `{0, .., W-1}`. A backoff of zero means the
//!    station contends again in the next beacon interval.
//!
//! Replications use ChaCha8 streams: run `k` of a master seed `s` is the
//! generator seeded from `s` with stream id `k`. Grid sweeps reuse the same
//! per-run streams at every point (common random numbers), so a one-point
//! sweep is identical to [`run`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{self, NetworkConfig, ProtocolParams, StationState, ValidationError};
use crate::stats;

pub type SimRng = ChaCha8Rng;

/// Generator for replication `run` of the master seed.
pub fn run_rng(master_seed: u64, run: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run);
    rng
}

/// How a station picks its backoff after reaching the retry limit.
pub trait BackoffPolicy: Sync {
    fn draw(&self, window: u32, rng: &mut SimRng) -> u32;
}

/// Uniform over `{0, .., W-1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformBackoff;

impl BackoffPolicy for UniformBackoff {
    fn draw(&self, window: u32, rng: &mut SimRng) -> u32 {
        rng.random_range(0..window)
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    Success(usize),
    Collision(Vec<usize>),
}

/// Slot choices of one beacon interval. Buffers are reused between steps.
#[derive(Debug, Clone, Default)]
pub struct BiOutcome {
    /// Slot picked by each station, `None` while backing off.
    pub chosen: Vec<Option<u32>>,
    /// Number of claimants per slot.
    pub claims: Vec<u32>,
}

impl BiOutcome {
    fn reset(&mut self, stations: usize, slots: usize) {
        self.chosen.clear();
        self.chosen.resize(stations, None);
        self.claims.clear();
        self.claims.resize(slots, 0);
    }

    pub fn slot(&self, slot: usize) -> SlotOutcome {
        let who: Vec<usize> = self
            .chosen
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Some(slot as u32))
            .map(|(i, _)| i)
            .collect();
        match who.len() {
            0 => SlotOutcome::Idle,
            1 => SlotOutcome::Success(who[0]),
            _ => SlotOutcome::Collision(who),
        }
    }

    pub fn slots(&self) -> Vec<SlotOutcome> {
        (0..self.claims.len()).map(|m| self.slot(m)).collect()
    }

    pub fn successes(&self) -> usize {
        self.claims.iter().filter(|&&c| c == 1).count()
    }

    pub fn collided_slots(&self) -> usize {
        self.claims.iter().filter(|&&c| c >= 2).count()
    }

    pub fn idle_slots(&self) -> usize {
        self.claims.iter().filter(|&&c| c == 0).count()
    }

    /// Stations that transmitted this beacon interval.
    pub fn attempts(&self) -> usize {
        self.chosen.iter().filter(|c| c.is_some()).count()
    }

    pub fn succeeded(&self, station: usize) -> bool {
        matches!(self.chosen[station], Some(m) if self.claims[m as usize] == 1)
    }
}

/// Fresh stations in state `(0, 0)` with their first episode starting at BI 0.
pub fn initial_stations(count: u32) -> Vec<StationState> {
    vec![StationState::default(); count as usize]
}

/// Advances every station by one beacon interval (`bi` is its index).
pub fn step_bi<B: BackoffPolicy>(
    stations: &mut [StationState],
    params: &ProtocolParams,
    bi: u64,
    policy: &B,
    rng: &mut SimRng,
    outcome: &mut BiOutcome,
) {
    let slots = params.slots;
    outcome.reset(stations.len(), slots as usize);
    for (st, choice) in stations.iter_mut().zip(outcome.chosen.iter_mut()) {
        if st.backoff > 0 {
            st.backoff -= 1;
        } else {
            let m = rng.random_range(0..slots);
            outcome.claims[m as usize] += 1;
            *choice = Some(m);
        }
    }
    let retry = params.retry_limit;
    for (st, choice) in stations.iter_mut().zip(&outcome.chosen) {
        let Some(m) = *choice else { continue };
        if outcome.claims[m as usize] == 1 {
            st.collisions = 0;
            st.episode_start_bi = bi + 1;
        } else if st.collisions + 1 < retry {
            st.collisions += 1;
        } else {
            st.collisions = retry;
            st.backoff = policy.draw(params.contention_window, rng);
        }
    }
}

/// Metrics of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub p_hat_s: f64,
    #[serde(rename = "S")]
    pub s: f64,
    /// Mean latency of episodes completed in the measured window; NaN if none.
    #[serde(rename = "D")]
    pub d: f64,
    /// Collided attempts over attempts.
    pub p_cond: f64,
    pub collisions_per_bi: f64,
    pub episodes: u64,
}

/// 95% confidence half-widths across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiHalfWidths {
    pub p_hat_s: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub p_cond: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Successes per station per measured beacon interval.
    pub p_hat_s_emp: f64,
    /// Successful slots per beacon interval over `M`.
    #[serde(rename = "S_emp")]
    pub s_emp: f64,
    /// Mean BF training latency in seconds.
    #[serde(rename = "D_emp")]
    pub d_emp: f64,
    /// Collision probability of an attempt (diagnostic).
    pub p_cond_emp: f64,
    pub collisions_per_bi: f64,
    pub ci_half_widths: CiHalfWidths,
    pub per_run: Vec<RunMetrics>,
}

impl SimReport {
    fn aggregate(per_run: Vec<RunMetrics>) -> Self {
        let col = |f: fn(&RunMetrics) -> f64| -> Vec<f64> {
            per_run.iter().map(f).filter(|x| x.is_finite()).collect()
        };
        let (ps, s, d, pc, cpb) = (
            col(|r| r.p_hat_s),
            col(|r| r.s),
            col(|r| r.d),
            col(|r| r.p_cond),
            col(|r| r.collisions_per_bi),
        );
        let ci = |xs: &[f64]| stats::ci_half_width(xs, stats::Z95);
        SimReport {
            p_hat_s_emp: stats::mean(&ps),
            s_emp: stats::mean(&s),
            d_emp: stats::mean(&d),
            p_cond_emp: stats::mean(&pc),
            collisions_per_bi: stats::mean(&cpb),
            ci_half_widths: CiHalfWidths { p_hat_s: ci(&ps), s: ci(&s), d: ci(&d), p_cond: ci(&pc) },
            per_run,
        }
    }
}

/// One replication of `net.bi_count` beacon intervals.
pub fn run_once<B: BackoffPolicy>(
    params: &ProtocolParams,
    net: &NetworkConfig,
    policy: &B,
    rng: &mut SimRng,
) -> RunMetrics {
    let mut stations = initial_stations(net.stations);
    let mut outcome = BiOutcome::default();
    let (mut successes, mut attempts, mut collided_attempts, mut collided_slots) = (0u64, 0u64, 0u64, 0u64);
    let (mut latency_bis, mut episodes) = (0u64, 0u64);
    let mut starts: Vec<u64> = Vec::with_capacity(stations.len());
    for bi in 0..net.bi_count {
        let measured = bi >= net.warmup_bi;
        if measured {
            // A success overwrites the episode start, so keep the old ones.
            starts.clear();
            starts.extend(stations.iter().map(|s| s.episode_start_bi));
        }
        step_bi(&mut stations, params, bi, policy, rng, &mut outcome);
        if !measured {
            continue;
        }
        let ok = outcome.successes() as u64;
        let tried = outcome.attempts() as u64;
        successes += ok;
        attempts += tried;
        collided_attempts += tried - ok;
        collided_slots += outcome.collided_slots() as u64;
        for (i, start) in starts.iter().enumerate() {
            if outcome.succeeded(i) {
                latency_bis += bi - start;
                episodes += 1;
            }
        }
    }
    let measured = net.measured_bi() as f64;
    let d = if episodes > 0 {
        latency_bis as f64 / episodes as f64 * params.beacon_interval + params.sweep_duration()
    } else {
        f64::NAN
    };
    RunMetrics {
        p_hat_s: successes as f64 / (measured * f64::from(net.stations)),
        s: successes as f64 / (measured * f64::from(params.slots)),
        d,
        p_cond: if attempts > 0 { collided_attempts as f64 / attempts as f64 } else { f64::NAN },
        collisions_per_bi: collided_slots as f64 / measured,
        episodes,
    }
}

/// Runs every replication with the standard uniform backoff.
pub fn run(params: &ProtocolParams, net: &NetworkConfig) -> Result<SimReport, ValidationError> {
    run_with(params, net, &UniformBackoff)
}

pub fn run_with<B: BackoffPolicy>(
    params: &ProtocolParams,
    net: &NetworkConfig,
    policy: &B,
) -> Result<SimReport, ValidationError> {
    domain::validate(params, net)?;
    let per_run: Vec<RunMetrics> = (0..net.run_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = run_rng(net.seed, u64::from(k));
            run_once(params, net, policy, &mut rng)
        })
        .collect();
    Ok(SimReport::aggregate(per_run))
}

/// One point of an `(N, M, R, W)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(rename = "N")]
    pub stations: u32,
    #[serde(rename = "M")]
    pub slots: u32,
    #[serde(rename = "R")]
    pub retry_limit: u32,
    #[serde(rename = "W")]
    pub contention_window: u32,
}

impl GridPoint {
    pub fn apply(&self, params: &ProtocolParams) -> ProtocolParams {
        params
            .with_slots(self.slots)
            .with_retry_limit(self.retry_limit)
            .with_contention_window(self.contention_window)
    }
}

/// Cartesian grid; points are ordered by `M`, then `R`, then `W`, then `N`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Grid {
    pub stations: Vec<u32>,
    pub slots: Vec<u32>,
    pub retry_limits: Vec<u32>,
    pub contention_windows: Vec<u32>,
}

impl Grid {
    /// The single point described by `params` and `net`.
    pub fn single(params: &ProtocolParams, net: &NetworkConfig) -> Self {
        Self {
            stations: vec![net.stations],
            slots: vec![params.slots],
            retry_limits: vec![params.retry_limit],
            contention_windows: vec![params.contention_window],
        }
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &slots in &self.slots {
            for &retry_limit in &self.retry_limits {
                for &contention_window in &self.contention_windows {
                    for &stations in &self.stations {
                        out.push(GridPoint { stations, slots, retry_limit, contention_window });
                    }
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.points().is_empty()
    }
}

/// Simulates every grid point with the same per-run seed streams.
pub fn sweep(
    template: &ProtocolParams,
    grid: &Grid,
    net: &NetworkConfig,
) -> Result<Vec<(GridPoint, SimReport)>, ValidationError> {
    grid.points()
        .into_iter()
        .map(|pt| {
            let params = pt.apply(template);
            let net = net.with_stations(pt.stations);
            run(&params, &net).map(|r| (pt, r))
        })
        .collect()
}
