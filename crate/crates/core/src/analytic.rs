//! Mean-field model of a single station's A-BFT contention chain.
//!
//! A tagged station is described by `(r, w)`: `r` consecutive collisions and
//! `w` beacon intervals of remaining backoff. Every other station couples to
//! it only through the conditional collision probability `p`, which is the
//! root of
//!
//! ```text
//! f(p) = (1 - 1 / (M (p^R (W-1)/2 + 1)))^(N-1) + p - 1
//! ```
//!
//! Everything else (stationary vector, activity probability, success
//! probability, efficiency, latency) is a closed form in `p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ProtocolParams;

/// Default absolute residual for the collision-probability solve.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Hard cap on bisection steps.
pub const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AnalyticError {
    #[error("bisection stopped after {iterations} steps with residual {residual:e} (tol {tol:e})")]
    NonConvergence { iterations: usize, residual: f64, tol: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("packet error probability must lie in [0, 1), got {0}")]
    BadPacketError(f64),
    /// Root at `p = 1`: with one slot and no backoff spread, every attempt collides.
    #[error("every transmission collides (root at p = 1)")]
    CertainCollision,
}

/// Options for the fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// Probability that a collision-free attempt still fails on the channel.
    /// Zero models the perfect channel; a non-zero value turns the failure
    /// probability into `1 - (1 - p_c)(1 - p_e)`.
    pub packet_error: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOLERANCE, packet_error: 0.0 }
    }
}

/// `p^R`, via logs for `p > 0`.
pub(crate) fn pow_retry(p: f64, retry_limit: u32) -> f64 {
    if p <= 0.0 {
        if retry_limit == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (f64::from(retry_limit) * p.ln()).exp()
    }
}

/// `p^R (W-1)/2 + 1`, the normaliser shared by every closed form.
fn normaliser(params: &ProtocolParams, p: f64) -> f64 {
    pow_retry(p, params.retry_limit) * f64::from(params.contention_window - 1) / 2.0 + 1.0
}

/// Residual of the fixed-point equation at `p`, with an optional
/// packet-error probability.
pub fn fixed_point_residual(params: &ProtocolParams, stations: u32, p: f64) -> f64 {
    residual_with(params, stations, p, 0.0)
}

fn residual_with(params: &ProtocolParams, stations: u32, p: f64, packet_error: f64) -> f64 {
    let tau = 1.0 / normaliser(params, p);
    let clear = (1.0 - tau / f64::from(params.slots)).powi(stations as i32 - 1);
    clear * (1.0 - packet_error) + p - 1.0
}

/// Solves for the conditional collision probability with default options.
pub fn solve_collision_probability(
    params: &ProtocolParams,
    stations: u32,
    tol: f64,
) -> Result<f64, AnalyticError> {
    solve_collision_probability_with(params, stations, &SolverOptions { tol, ..Default::default() })
}

/// Bisection on `[0, 1]`. The residual is strictly increasing in `p`, is
/// non-positive at 0 and non-negative at 1, so the root is unique.
pub fn solve_collision_probability_with(
    params: &ProtocolParams,
    stations: u32,
    opts: &SolverOptions,
) -> Result<f64, AnalyticError> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(AnalyticError::BadTolerance(opts.tol));
    }
    if !(0.0..1.0).contains(&opts.packet_error) {
        return Err(AnalyticError::BadPacketError(opts.packet_error));
    }
    if stations <= 1 && opts.packet_error == 0.0 {
        return Ok(0.0);
    }
    if params.slots == 1 && params.contention_window == 1 {
        return Err(AnalyticError::CertainCollision);
    }
    let f = |p: f64| residual_with(params, stations, p, opts.packet_error);

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut f_lo = f(lo);
    // f(1) is positive but can underflow against 1 when the root sits
    // within an ulp of 1; the bisection then settles on the largest p < 1.
    let mut f_hi = f(hi).max(0.0);
    if f_lo >= 0.0 {
        return Ok(lo);
    }
    let mut steps = 0;
    while steps < MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        steps += 1;
    }
    let (p, residual) = if -f_lo <= f_hi || hi >= 1.0 { (lo, f_lo) } else { (hi, f_hi) };
    if residual.abs() <= opts.tol && p < 1.0 {
        Ok(p)
    } else {
        Err(AnalyticError::NonConvergence { iterations: steps, residual, tol: opts.tol })
    }
}

/// Stationary distribution of the single-station chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// `pi[r][0]` for `r` in `0..R`.
    pub pi_active: Vec<f64>,
    /// `pi[R][w]` for `w` in `0..W`; entry 0 is the active state `(R, 0)`.
    pub pi_backoff: Vec<f64>,
    pub p: f64,
}

impl SteadyState {
    /// Probabilities in chain order `(0,0), .., (R-1,0), (R,0), .., (R,W-1)`.
    pub fn as_vector(&self) -> Vec<f64> {
        self.pi_active.iter().chain(&self.pi_backoff).copied().collect()
    }

    pub fn total(&self) -> f64 {
        self.pi_active.iter().sum::<f64>() + self.pi_backoff.iter().sum::<f64>()
    }

    /// Mass on states with zero backoff.
    pub fn active_mass(&self) -> f64 {
        self.pi_active.iter().sum::<f64>() + self.pi_backoff[0]
    }
}

pub fn steady_state(params: &ProtocolParams, p: f64) -> SteadyState {
    debug_assert!((0.0..1.0).contains(&p));
    let retry = params.retry_limit;
    let window = params.contention_window;
    let norm = normaliser(params, p);
    let p_r = pow_retry(p, retry);
    let pi_active = (0..retry).map(|r| pow_retry(p, r) * (1.0 - p) / norm).collect();
    let pi_backoff = (0..window)
        .map(|w| f64::from(window - w) * p_r / (f64::from(window) * norm))
        .collect();
    SteadyState { pi_active, pi_backoff, p }
}

/// Probability that a station has no pending backoff, `tau`.
pub fn activity_probability(params: &ProtocolParams, p: f64) -> f64 {
    1.0 / normaliser(params, p)
}

/// Conditional success given active (`p_s`) and unconditional per-BI
/// success (`p_hat_s = (1-p) tau`).
pub fn success_probability(params: &ProtocolParams, stations: u32, p: f64) -> (f64, f64) {
    let tau = activity_probability(params, p);
    let p_s = (1.0 - tau / f64::from(params.slots)).powi(stations as i32 - 1);
    (p_s, (1.0 - p) * tau)
}

/// Expected fraction of slots carrying a successful sweep.
pub fn efficiency(params: &ProtocolParams, stations: u32, p: f64) -> f64 {
    let (_, p_hat_s) = success_probability(params, stations, p);
    p_hat_s * f64::from(stations) / f64::from(params.slots)
}

/// Dense-user approximation: `(exp(-N tau / M), x exp(-x))` with `x = N tau / M`.
pub fn approx_efficiency(params: &ProtocolParams, stations: u32, p: f64) -> (f64, f64) {
    let x = activity_probability(params, p) * f64::from(stations) / f64::from(params.slots);
    let p_s = (-x).exp();
    (p_s, x * p_s)
}

/// `x exp(-x)` as a function of the offered load `x = tau N / M`.
pub fn approx_efficiency_at_load(load: f64) -> f64 {
    load * (-load).exp()
}

/// Mean BF training latency in seconds.
pub fn latency(params: &ProtocolParams, p: f64) -> f64 {
    let backoff_term = pow_retry(p, params.retry_limit) * f64::from(params.contention_window - 1) / 2.0;
    params.beacon_interval * ((backoff_term + p) / (1.0 - p) + params.alpha())
}

/// The two halves of the latency sum: episodes with fewer than `R`
/// collisions, and episodes that went through backoff.
pub fn latency_parts(params: &ProtocolParams, p: f64) -> (f64, f64) {
    let r = f64::from(params.retry_limit);
    let w = f64::from(params.contention_window);
    let alpha = params.alpha();
    let p_r = pow_retry(p, params.retry_limit);
    let below = params.beacon_interval
        * ((p * p_r * (r - 1.0) - r * p_r + p) / (1.0 - p) + (1.0 - p_r) * alpha);
    let beyond = params.beacon_interval * p_r * ((w + 1.0) / (2.0 * (1.0 - p)) + r + alpha - 1.0);
    (below, beyond)
}

/// Latency of a success that followed `collisions` consecutive collisions,
/// with the backoff length replaced by its mean.
pub fn conditional_latency(params: &ProtocolParams, collisions: u32) -> f64 {
    let alpha = params.alpha();
    let retry = params.retry_limit;
    let bi = if collisions < retry {
        f64::from(collisions)
    } else {
        let mean_backoff = f64::from(params.contention_window - 1) / 2.0;
        f64::from(collisions - retry + 1) * (mean_backoff + 1.0) + f64::from(retry) - 1.0
    };
    params.beacon_interval * (bi + alpha)
}

/// Partial sum `sum_{i=0}^{terms} (1-p) p^i E[D_i]` of the latency series.
pub fn latency_series(params: &ProtocolParams, p: f64, terms: u32) -> f64 {
    let mut weight = 1.0 - p;
    let mut sum = 0.0;
    for i in 0..=terms {
        sum += weight * conditional_latency(params, i);
        weight *= p;
        if weight == 0.0 {
            break;
        }
    }
    sum
}

/// Every analytic metric derived from one solved fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub p: f64,
    pub tau: f64,
    pub p_s: f64,
    pub p_hat_s: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_hat")]
    pub s_hat: f64,
    /// Mean latency in seconds.
    #[serde(rename = "D")]
    pub d: f64,
}

pub fn report(params: &ProtocolParams, stations: u32) -> Result<AnalyticReport, AnalyticError> {
    let p = solve_collision_probability(params, stations, DEFAULT_TOLERANCE)?;
    Ok(report_at(params, stations, p))
}

/// Fills a report from an already-solved `p`.
pub fn report_at(params: &ProtocolParams, stations: u32, p: f64) -> AnalyticReport {
    let tau = activity_probability(params, p);
    let (p_s, p_hat_s) = success_probability(params, stations, p);
    let (_, s_hat) = approx_efficiency(params, stations, p);
    AnalyticReport {
        p,
        tau,
        p_s,
        p_hat_s,
        s: p_hat_s * f64::from(stations) / f64::from(params.slots),
        s_hat,
        d: latency(params, p),
    }
}
