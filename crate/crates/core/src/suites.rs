//! Self-check suites run by `abft validate`.
//!
//! * `oracle`: simulated per-BI success probability against the exact joint
//!   chain on tiny instances.
//! * `balance`: the closed-form steady state is a fixed point of the
//!   single-station transition matrix.
//! * `latency`: truncated latency series against the closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic;
use crate::config::ValidateSection;
use crate::domain::{NetworkConfig, ProtocolParams};
use crate::oracle;
use crate::sim::{self, BackoffPolicy, UniformBackoff};
use crate::stats;

/// `(N, M, R, W)` instances small enough for the exact joint chain.
pub const ORACLE_INSTANCES: [(u32, u32, u32, u32); 10] = [
    (1, 2, 1, 2),
    (2, 1, 1, 2),
    (2, 2, 1, 2),
    (2, 2, 2, 2),
    (2, 3, 1, 1),
    (2, 3, 2, 2),
    (3, 2, 1, 2),
    (3, 3, 2, 2),
    (3, 2, 2, 1),
    (3, 1, 2, 2),
];

pub const BALANCE_CASES: usize = 100;
const LATENCY_TERMS: u32 = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckFailure {
    pub case: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    /// Largest residual relative to its tolerance; below 1 means pass.
    pub worst_ratio: f64,
    pub failures: Vec<CheckFailure>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self { name, passed: true, checks: 0, worst_ratio: 0.0, failures: Vec::new() }
    }

    fn check(&mut self, case: String, residual: f64, tol: f64, detail: impl FnOnce() -> String) {
        self.checks += 1;
        let ratio = if tol > 0.0 { residual / tol } else if residual == 0.0 { 0.0 } else { f64::INFINITY };
        // NaN residuals count as failures.
        let ok = residual <= tol;
        self.worst_ratio = if ratio.is_nan() { f64::INFINITY } else { self.worst_ratio.max(ratio) };
        if !ok {
            self.passed = false;
            self.failures.push(CheckFailure { case, detail: detail() });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Runs every suite.
pub fn run_all(params: &ProtocolParams, cfg: &ValidateSection, seed: u64) -> ValidationReport {
    let suites = vec![
        oracle_suite(cfg, seed, &UniformBackoff),
        balance_suite(params, cfg, seed),
        latency_suite(params, cfg),
    ];
    ValidationReport { passed: suites.iter().all(|s| s.passed), suites }
}

/// One oracle-suite comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleCase {
    pub stations: u32,
    pub slots: u32,
    pub retry_limit: u32,
    pub contention_window: u32,
    pub exact: f64,
    pub simulated: f64,
    /// 99% half-width of the simulated mean.
    pub half_width: f64,
    /// Decoupled analytic value, for reference only.
    pub analytic: f64,
}

/// Exact and simulated `p_hat_s` for one instance.
pub fn oracle_case<B: BackoffPolicy>(
    instance: (u32, u32, u32, u32),
    cfg: &ValidateSection,
    seed: u64,
    policy: &B,
) -> Result<OracleCase, String> {
    let (n, m, r, w) = instance;
    let params = ProtocolParams::default().with_slots(m).with_retry_limit(r).with_contention_window(w);
    let chain = oracle::build(&params, n).map_err(|e| e.to_string())?;
    let exact = oracle::exact_metrics(&chain).map_err(|e| e.to_string())?;
    let net = NetworkConfig {
        stations: n,
        bi_count: cfg.oracle_bi,
        run_count: cfg.oracle_runs,
        seed,
        warmup_bi: (cfg.oracle_bi / 10).min(500),
    };
    let rep = sim::run_with(&params, &net, policy).map_err(|e| e.to_string())?;
    let per_run: Vec<f64> = rep.per_run.iter().map(|r| r.p_hat_s).collect();
    let analytic = analytic::report(&params, n).map(|a| a.p_hat_s).unwrap_or(f64::NAN);
    Ok(OracleCase {
        stations: n,
        slots: m,
        retry_limit: r,
        contention_window: w,
        exact: exact.p_hat_s,
        simulated: rep.p_hat_s_emp,
        half_width: stats::ci_half_width(&per_run, stats::Z99),
        analytic,
    })
}

pub fn oracle_suite<B: BackoffPolicy>(cfg: &ValidateSection, seed: u64, policy: &B) -> SuiteReport {
    let mut rep = SuiteReport::new("oracle");
    for inst in ORACLE_INSTANCES {
        let label = format!("N={} M={} R={} W={}", inst.0, inst.1, inst.2, inst.3);
        match oracle_case(inst, cfg, seed, policy) {
            Ok(c) => {
                // Deterministic instances have zero spread; allow rounding only.
                let tol = c.half_width.max(1e-12);
                rep.check(label, (c.simulated - c.exact).abs(), tol, || {
                    format!("simulated {} vs exact {} (99% half-width {})", c.simulated, c.exact, c.half_width)
                });
            }
            Err(e) => rep.check(label, f64::NAN, 0.0, || e),
        }
    }
    rep
}

/// Single-station transition matrix built from the protocol rules, in the
/// state order of [`analytic::SteadyState::as_vector`]. `P[i][j]` is the
/// probability of moving from state `i` to state `j`.
pub fn station_transition_matrix(p: f64, retry_limit: u32, window: u32) -> Vec<Vec<f64>> {
    let (r_lim, w_lim) = (retry_limit as usize, window as usize);
    let n = r_lim + w_lim;
    let backoff = |w: usize| r_lim + w;
    let mut m = vec![vec![0.0; n]; n];
    // Active states (r, 0) for r < R and (R, 0).
    for i in 0..=r_lim {
        m[i][0] += 1.0 - p;
        if i + 1 < r_lim {
            m[i][i + 1] += p;
        } else {
            for w in 0..w_lim {
                m[i][backoff(w)] += p / window as f64;
            }
        }
    }
    // Backoff counts down one per beacon interval.
    for w in 1..w_lim {
        m[backoff(w)][backoff(w - 1)] = 1.0;
    }
    m
}

pub fn balance_suite(params: &ProtocolParams, cfg: &ValidateSection, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("balance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..BALANCE_CASES {
        let p: f64 = rng.random_range(0.0..0.999);
        let r = rng.random_range(1..=params.max_retry_limit.max(1));
        let w = rng.random_range(1..=params.max_contention_window.max(1));
        let pr = params.with_retry_limit(r).with_contention_window(w);
        let pi = analytic::steady_state(&pr, p).as_vector();
        let m = station_transition_matrix(p, r, w);
        let mut worst = (pi.iter().sum::<f64>() - 1.0).abs();
        for j in 0..pi.len() {
            let inflow: f64 = (0..pi.len()).map(|i| pi[i] * m[i][j]).sum();
            worst = worst.max((inflow - pi[j]).abs());
        }
        rep.check(format!("p={p:.6} R={r} W={w}"), worst, cfg.balance_tol, || {
            format!("largest residual {worst:e}")
        });
    }
    rep
}

pub fn latency_suite(params: &ProtocolParams, cfg: &ValidateSection) -> SuiteReport {
    let mut rep = SuiteReport::new("latency");
    for (r, w) in [(1, 1), (1, 8), (4, 4), (8, 8), (8, 20), (20, 2)] {
        let pr = params.with_retry_limit(r).with_contention_window(w);
        for k in 0..=19 {
            let p = 0.05 * f64::from(k);
            let closed = analytic::latency(&pr, p);
            let series = analytic::latency_series(&pr, p, LATENCY_TERMS);
            let rel = ((series - closed) / closed).abs();
            rep.check(format!("p={p:.2} R={r} W={w}"), rel, cfg.latency_rel_tol, || {
                format!("series {series} vs closed form {closed}")
            });
        }
    }
    rep
}
