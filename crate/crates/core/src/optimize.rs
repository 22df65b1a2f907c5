//! Slot-count relaxation and exhaustive `(R, W)` tuning.

use std::ops::RangeInclusive;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{self, AnalyticError, AnalyticReport, DEFAULT_TOLERANCE};
use crate::domain::ProtocolParams;

/// Efficiencies closer than this are treated as equal when picking the optimum.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Optimal number of A-BFT slots under the dense-user approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotOptimum {
    /// `N / ((1 - 1/e)^R (W-1)/2 + 1)`.
    pub m_star_real: f64,
    /// Floor or ceiling of `m_star_real`, whichever has the larger `S_hat`.
    pub m_star_int: u32,
    /// Approximate efficiency at `m_star_int`.
    pub s_hat: f64,
    /// Exact efficiency at `m_star_int`.
    pub s: f64,
}

/// Slot count that maximises the approximate efficiency. At the relaxed
/// optimum the load `tau N / M` is 1 and `p = 1 - 1/e`.
pub fn optimal_slot_count(params: &ProtocolParams, stations: u32) -> Result<SlotOptimum, AnalyticError> {
    let p_opt = 1.0 - (-1.0f64).exp();
    let m_star_real = f64::from(stations) * analytic::activity_probability(params, p_opt);

    let floor = (m_star_real.floor() as u32).max(1);
    let ceil = (m_star_real.ceil() as u32).max(1);
    let mut best: Option<(u32, AnalyticReport)> = None;
    for m in [floor, ceil] {
        let rep = analytic::report(&params.with_slots(m), stations)?;
        if best.as_ref().is_none_or(|(_, b)| rep.s_hat > b.s_hat) {
            best = Some((m, rep));
        }
    }
    let (m_star_int, rep) = best.expect("two candidates evaluated");
    Ok(SlotOptimum { m_star_real, m_star_int, s_hat: rep.s_hat, s: rep.s })
}

/// Candidate `(R, W)` values for [`tune_over`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    pub retry_limits: RangeInclusive<u32>,
    pub contention_windows: RangeInclusive<u32>,
}

impl SearchSpace {
    /// `[1, R_max] x [1, W_max]`.
    pub fn from_bounds(params: &ProtocolParams) -> Self {
        Self {
            retry_limits: 1..=params.max_retry_limit,
            contention_windows: 1..=params.max_contention_window,
        }
    }

    /// Only the retry limit varies; `W` stays at the configured value.
    pub fn retry_only(params: &ProtocolParams) -> Self {
        Self {
            retry_limits: 1..=params.max_retry_limit,
            contention_windows: params.contention_window..=params.contention_window,
        }
    }

    pub fn len(&self) -> usize {
        self.retry_limits.clone().count() * self.contention_windows.clone().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridValue {
    #[serde(rename = "R")]
    pub retry_limit: u32,
    #[serde(rename = "W")]
    pub contention_window: u32,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub retry_limit: u32,
    pub contention_window: u32,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// Every evaluated point, `R` ascending then `W` ascending.
    pub grid: Vec<GridValue>,
}

/// Exhaustive search over `[1, R_max] x [1, W_max]` maximising the exact
/// efficiency.
pub fn tune(params: &ProtocolParams, stations: u32, slots: u32) -> Result<TuneResult, AnalyticError> {
    tune_over(params, stations, slots, &SearchSpace::from_bounds(params))
}

/// Exhaustive search over `space`. Ties within [`TIE_TOLERANCE`] go to the
/// smaller `R`, then the smaller `W`.
pub fn tune_over(
    params: &ProtocolParams,
    stations: u32,
    slots: u32,
    space: &SearchSpace,
) -> Result<TuneResult, AnalyticError> {
    let base = params.with_slots(slots);
    let candidates: Vec<(u32, u32)> = space
        .retry_limits
        .clone()
        .flat_map(|r| space.contention_windows.clone().map(move |w| (r, w)))
        .collect();
    let grid = candidates
        .par_iter()
        .map(|&(r, w)| {
            let pr = base.with_retry_limit(r).with_contention_window(w);
            let (s, d) = match analytic::solve_collision_probability(&pr, stations, DEFAULT_TOLERANCE) {
                Ok(p) => (analytic::efficiency(&pr, stations, p), analytic::latency(&pr, p)),
                // Nobody ever gets through.
                Err(AnalyticError::CertainCollision) => (0.0, f64::INFINITY),
                Err(e) => return Err(e),
            };
            Ok(GridValue { retry_limit: r, contention_window: w, s, d })
        })
        .collect::<Result<Vec<_>, AnalyticError>>()?;

    let best = grid
        .iter()
        .copied()
        .reduce(|best, g| if g.s > best.s + TIE_TOLERANCE { g } else { best })
        .expect("search space is empty");
    Ok(TuneResult {
        retry_limit: best.retry_limit,
        contention_window: best.contention_window,
        s: best.s,
        d: best.d,
        grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    #[serde(rename = "N")]
    pub stations: u32,
    #[serde(rename = "M")]
    pub slots: u32,
    #[serde(rename = "R_star")]
    pub retry_limit: u32,
    #[serde(rename = "W_star")]
    pub contention_window: u32,
    #[serde(rename = "S_star")]
    pub s: f64,
    #[serde(rename = "D_star")]
    pub d: f64,
}

/// Offline lookup table of tuned parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningTable {
    pub rows: Vec<TableRow>,
}

impl TuningTable {
    pub fn lookup(&self, stations: u32, slots: u32) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.stations == stations && r.slots == slots)
    }
}

/// Tunes every `(N, M)` pair; rows are ordered by `M`, then `N`.
pub fn build_table(
    params: &ProtocolParams,
    stations: &[u32],
    slots: &[u32],
) -> Result<TuningTable, AnalyticError> {
    let mut rows = Vec::with_capacity(stations.len() * slots.len());
    for &m in slots {
        let mut prev: Option<TableRow> = None;
        for &n in stations {
            let t = tune(params, n, m)?;
            let row = TableRow {
                stations: n,
                slots: m,
                retry_limit: t.retry_limit,
                contention_window: t.contention_window,
                s: t.s,
                d: t.d,
            };
            if let Some(p) = prev {
                if n > p.stations && row.retry_limit > p.retry_limit {
                    warn!(
                        "R* rises from {} (N={}) to {} (N={}) at M={m}",
                        p.retry_limit, p.stations, row.retry_limit, n
                    );
                }
            }
            prev = Some(row);
            rows.push(row);
        }
    }
    Ok(TuningTable { rows })
}

/// Default-vs-tuned comparison for one `(N, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    #[serde(rename = "N")]
    pub stations: u32,
    #[serde(rename = "M")]
    pub slots: u32,
    #[serde(rename = "S_default")]
    pub s_default: f64,
    #[serde(rename = "S_tuned")]
    pub s_tuned: f64,
    /// `S_tuned / S_default - 1`.
    #[serde(rename = "S_gain")]
    pub s_gain: f64,
    #[serde(rename = "D_default")]
    pub d_default: f64,
    #[serde(rename = "D_tuned")]
    pub d_tuned: f64,
    /// `1 - D_tuned / D_default`.
    #[serde(rename = "D_reduction")]
    pub d_reduction: f64,
}

/// Compares each table row against the configured `(R, W)` in `params`.
pub fn compare(params: &ProtocolParams, table: &TuningTable) -> Result<Vec<Comparison>, AnalyticError> {
    table
        .rows
        .iter()
        .map(|row| {
            let def = analytic::report(&params.with_slots(row.slots), row.stations)?;
            Ok(Comparison {
                stations: row.stations,
                slots: row.slots,
                s_default: def.s,
                s_tuned: row.s,
                s_gain: row.s / def.s - 1.0,
                d_default: def.d,
                d_tuned: row.d,
                d_reduction: 1.0 - row.d / def.d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxed_slot_count() {
        let pr = ProtocolParams::default().with_retry_limit(1).with_contention_window(8);
        let opt = optimal_slot_count(&pr, 32).unwrap();
        let want = 32.0 / ((1.0 - (-1.0f64).exp()) * 3.5 + 1.0);
        assert!((opt.m_star_real - want).abs() < 1e-12);
        assert!((opt.m_star_real - 9.96).abs() < 0.01);
        assert!(opt.m_star_int == 9 || opt.m_star_int == 10);
    }

    #[test]
    fn unit_window_gives_one_slot_per_station() {
        for r in [1, 4, 20] {
            let pr = ProtocolParams::default().with_retry_limit(r).with_contention_window(1);
            assert_eq!(optimal_slot_count(&pr, 24).unwrap().m_star_real, 24.0);
        }
    }

    #[test]
    fn relaxed_optimum_hits_unit_load() {
        for (r, w, n) in [(1, 8, 32), (8, 8, 16), (3, 20, 40)] {
            let pr = ProtocolParams::default().with_retry_limit(r).with_contention_window(w);
            let m = optimal_slot_count(&pr, n).unwrap().m_star_real;
            let tau = analytic::activity_probability(&pr, 1.0 - (-1.0f64).exp());
            let load = tau * f64::from(n) / m;
            assert!((analytic::approx_efficiency_at_load(load) - (-1.0f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn lone_station_ties_resolve_to_smallest() {
        let t = tune(&ProtocolParams::default(), 1, 8).unwrap();
        assert_eq!((t.retry_limit, t.contention_window), (1, 1));
        assert!(t.grid.iter().all(|g| (g.s - 0.125).abs() < 1e-15));
        assert_eq!(t.grid.len(), 400);
    }

    #[test]
    fn optimum_dominates_grid() {
        let t = tune(&ProtocolParams::default(), 24, 12).unwrap();
        assert!(t.grid.iter().all(|g| g.s <= t.s + TIE_TOLERANCE));
        let again = tune(&ProtocolParams::default(), 24, 12).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn single_cell_table_matches_tune() {
        let pr = ProtocolParams::default();
        let table = build_table(&pr, &[20], &[8]).unwrap();
        let t = tune(&pr, 20, 8).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = table.rows[0];
        assert_eq!((row.retry_limit, row.contention_window, row.s, row.d), (t.retry_limit, t.contention_window, t.s, t.d));
    }

    #[test]
    fn certain_collision_points_score_zero() {
        let pr = ProtocolParams { max_retry_limit: 2, max_contention_window: 2, ..ProtocolParams::default() };
        let t = tune(&pr, 3, 1).unwrap();
        let dead: Vec<_> = t.grid.iter().filter(|g| g.contention_window == 1).collect();
        assert!(dead.iter().all(|g| g.s == 0.0 && g.d.is_infinite()));
        assert_eq!(t.contention_window, 2);
    }

    #[test]
    fn retry_only_space_keeps_window() {
        let pr = ProtocolParams::default();
        let t = tune_over(&pr, 32, 8, &SearchSpace::retry_only(&pr)).unwrap();
        assert_eq!(t.grid.len(), 20);
        assert!(t.grid.iter().all(|g| g.contention_window == 8));
    }
}
