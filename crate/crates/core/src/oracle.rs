//! Exact joint Markov chain over all stations, for tiny instances.
//!
//! A station occupies one of `R + W` states: `(r, 0)` for `r < R`, then
//! `(R, w)` for `w < W`. The joint state of `N` stations is the base-`(R+W)`
//! number whose digit `i` is station `i`'s state. Transitions enumerate every
//! success pattern of the active stations together with every backoff draw of
//! the stations that reach the retry limit, so the chain is exactly the
//! simulator's step rule with no mean-field decoupling.

use std::collections::HashMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::domain::{ProtocolParams, StationState};

/// Largest joint state space [`build`] accepts.
pub const DEFAULT_STATE_CAP: usize = 4096;
/// L1 residual `|pi P - pi|` at which power iteration stops.
pub const STATIONARY_TOLERANCE: f64 = 1e-13;
const MAX_POWER_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("joint state space ({states}) exceeds cap {cap}")]
    StateSpaceTooLarge { states: String, cap: usize },
    #[error("power iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
}

/// Number of ways to place `active` labelled stations in `slots` slots so
/// that no slot holds exactly one station.
fn no_singleton_count(active: usize, slots: usize) -> f64 {
    // table[a][m]
    let mut table = vec![vec![0.0f64; slots + 1]; active + 1];
    for row in table.iter_mut().take(1) {
        row.iter_mut().for_each(|v| *v = 1.0);
    }
    let binom = binomials(active);
    for m in 1..=slots {
        for a in 1..=active {
            let mut total = table[a][m - 1];
            for c in 2..=a {
                total += binom[a][c] * table[a - c][m - 1];
            }
            table[a][m] = total;
        }
    }
    table[active][slots]
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 0..=n {
        b[i][0] = 1.0;
        for j in 1..=i {
            b[i][j] = b[i - 1][j - 1] + if j < i { b[i - 1][j] } else { 0.0 };
        }
    }
    b
}

/// Probability that one particular set of `alone` stations (out of `active`)
/// are exactly the stations alone in their slot.
pub fn success_pattern_probability(active: usize, alone: usize, slots: usize) -> f64 {
    if alone > active || alone > slots {
        return 0.0;
    }
    let falling: f64 = (0..alone).map(|i| (slots - i) as f64).product();
    let rest = no_singleton_count(active - alone, slots - alone);
    falling * rest / (slots as f64).powi(active as i32)
}

/// Sparse joint transition matrix plus per-state success distributions.
#[derive(Debug, Clone)]
pub struct JointChain {
    pub params: ProtocolParams,
    pub stations: u32,
    /// `R + W`.
    pub per_station: usize,
    /// `rows[i]` lists `(j, P(i -> j))`, sorted by `j`.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// `success_dist[i][k]`: probability of `k` successful slots from state `i`.
    pub success_dist: Vec<Vec<f64>>,
}

impl JointChain {
    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    /// Per-station `(r, w)` pairs of a joint state.
    pub fn decode(&self, index: usize) -> Vec<(u32, u32)> {
        let retry = self.params.retry_limit as usize;
        let mut rest = index;
        (0..self.stations)
            .map(|_| {
                let d = rest % self.per_station;
                rest /= self.per_station;
                if d < retry {
                    (d as u32, 0)
                } else {
                    (retry as u32, (d - retry) as u32)
                }
            })
            .collect()
    }

    /// Joint index of simulator station states; `None` if any is out of range.
    pub fn encode(&self, stations: &[StationState]) -> Option<usize> {
        let retry = self.params.retry_limit;
        let mut index = 0usize;
        for st in stations.iter().rev() {
            let digit = if st.collisions < retry && st.backoff == 0 {
                st.collisions
            } else if st.collisions == retry && st.backoff < self.params.contention_window {
                retry + st.backoff
            } else {
                return None;
            };
            index = index * self.per_station + digit as usize;
        }
        Some(index)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, v)| v).sum()
    }

    /// `x P` for a row vector `x`.
    pub fn step_distribution(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for &(j, v) in row {
                out[j] += xi * v;
            }
        }
        out
    }

    /// Stationary vector by power iteration on the lazy chain `(I + P) / 2`,
    /// which has the same stationary vector but is aperiodic. Iteration
    /// starts with all stations in `(0, 0)`.
    pub fn stationary(&self) -> Result<(Vec<f64>, usize), OracleError> {
        let n = self.state_count();
        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        let mut residual = f64::INFINITY;
        for iter in 1..=MAX_POWER_ITERATIONS {
            let next = self.step_distribution(&pi);
            residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            if residual <= STATIONARY_TOLERANCE {
                return Ok((normalise(next), iter));
            }
            pi = pi.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        }
        Err(OracleError::NonConvergence { residual, iterations: MAX_POWER_ITERATIONS })
    }
}

fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

pub fn build(params: &ProtocolParams, stations: u32) -> Result<JointChain, OracleError> {
    build_with_cap(params, stations, DEFAULT_STATE_CAP)
}

pub fn build_with_cap(params: &ProtocolParams, stations: u32, cap: usize) -> Result<JointChain, OracleError> {
    if let Err(e) = params.validate() {
        return Err(OracleError::InvalidParams(e.to_string()));
    }
    if stations == 0 {
        return Err(OracleError::InvalidParams("N must be ≥ 1".into()));
    }
    let retry = params.retry_limit as usize;
    let window = params.contention_window as usize;
    let slots = params.slots as usize;
    let per_station = retry + window;
    let states = (per_station as u128)
        .checked_pow(stations)
        .filter(|&s| s <= cap as u128)
        .ok_or_else(|| OracleError::StateSpaceTooLarge {
            states: format!("{per_station}^{stations}"),
            cap,
        })? as usize;

    let n = stations as usize;
    let max_success = n.min(slots);
    // pattern[a][k]: probability of one specific k-subset of a active stations succeeding
    let pattern: Vec<Vec<f64>> = (0..=n)
        .map(|a| (0..=a).map(|k| success_pattern_probability(a, k, slots)).collect())
        .collect();

    let mut rows = Vec::with_capacity(states);
    let mut success_dist = Vec::with_capacity(states);
    let mut digits = vec![0usize; n];
    let mut next_digits = vec![0usize; n];
    for index in 0..states {
        let mut rest = index;
        for d in digits.iter_mut() {
            *d = rest % per_station;
            rest /= per_station;
        }
        let active: Vec<usize> = (0..n).filter(|&i| digits[i] <= retry).collect();
        let a = active.len();
        let mut row: HashMap<usize, f64> = HashMap::new();
        let mut dist = vec![0.0; max_success + 1];

        for mask in 0u64..(1u64 << a) {
            let k = mask.count_ones() as usize;
            let prob = pattern[a][k];
            if prob == 0.0 {
                continue;
            }
            dist[k] += prob;
            let mut drawers = Vec::new();
            for i in 0..n {
                next_digits[i] = if digits[i] > retry { digits[i] - 1 } else { digits[i] };
            }
            for (bit, &i) in active.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    next_digits[i] = 0;
                } else if digits[i] + 1 < retry {
                    next_digits[i] = digits[i] + 1;
                } else {
                    drawers.push(i);
                }
            }
            // every combination of backoff draws, each with weight W^-len
            let weight = prob / (window as f64).powi(drawers.len() as i32);
            let mut draws = vec![0usize; drawers.len()];
            loop {
                for (&i, &w) in drawers.iter().zip(&draws) {
                    next_digits[i] = retry + w;
                }
                let target = next_digits.iter().rev().fold(0usize, |acc, &d| acc * per_station + d);
                *row.entry(target).or_insert(0.0) += weight;
                if !advance(&mut draws, window) {
                    break;
                }
            }
        }
        let mut row: Vec<(usize, f64)> = row.into_iter().collect();
        row.sort_by_key(|&(j, _)| j);
        rows.push(row);
        success_dist.push(dist);
    }
    Ok(JointChain { params: *params, stations, per_station, rows, success_dist })
}

/// Odometer increment; false once every combination has been visited.
fn advance(draws: &mut [usize], base: usize) -> bool {
    for d in draws.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exact long-run metrics of a joint chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactMetrics {
    pub expected_successes: f64,
    /// Successes per station per beacon interval.
    pub p_hat_s: f64,
    #[serde(rename = "S")]
    pub s: f64,
    /// Stationary probability of `k` successful slots in a beacon interval.
    pub success_distribution: Vec<f64>,
    pub stationary: Vec<f64>,
    pub iterations: usize,
}

pub fn exact_metrics(chain: &JointChain) -> Result<ExactMetrics, OracleError> {
    let (pi, iterations) = chain.stationary()?;
    let width = chain.success_dist.first().map_or(1, Vec::len);
    let mut dist = vec![0.0; width];
    for (p, d) in pi.iter().zip(&chain.success_dist) {
        for (acc, v) in dist.iter_mut().zip(d) {
            *acc += p * v;
        }
    }
    let expected: f64 = dist.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    Ok(ExactMetrics {
        expected_successes: expected,
        p_hat_s: expected / f64::from(chain.stations),
        s: expected / f64::from(chain.params.slots),
        success_distribution: dist,
        stationary: pi,
        iterations,
    })
}

/// Pearson goodness-of-fit of observed counts against probabilities. Cells
/// with expected count below 5 are pooled. Returns `(statistic, dof, p_value)`;
/// with fewer than two cells the statistic is 0 and the p-value is 1.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let total: u64 = counts.iter().sum();
    let total = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * total;
        if e >= 5.0 {
            cells.push((c as f64, e));
        } else {
            pool_obs += c as f64;
            pool_exp += e;
        }
    }
    if pool_exp > 0.0 || pool_obs > 0.0 {
        cells.push((pool_obs, pool_exp));
    }
    if cells.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len() - 1;
    let p_value = match ChiSquared::new(dof as f64) {
        Ok(dist) if stat.is_finite() => 1.0 - dist.cdf(stat),
        _ => 0.0,
    };
    (stat, dof, p_value)
}
