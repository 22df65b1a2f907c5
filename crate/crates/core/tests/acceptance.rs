//! Exit criteria. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use abft_core::analytic::{self, DEFAULT_TOLERANCE};
use abft_core::config::ValidateSection;
use abft_core::domain::{NetworkConfig, ProtocolParams};
use abft_core::optimize::{self, SearchSpace};
use abft_core::output;
use abft_core::sim::{self, Grid, GridPoint, SimReport, UniformBackoff};
use abft_core::suites;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn params(m: u32, r: u32, w: u32) -> ProtocolParams {
    ProtocolParams::default().with_slots(m).with_retry_limit(r).with_contention_window(w)
}

fn desk_net(n: u32) -> NetworkConfig {
    NetworkConfig { stations: n, bi_count: 2_000, run_count: 100, seed: 1, warmup_bi: 500 }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn residual(m: u32, r: u32, w: u32, n: u32, p: f64) -> f64 {
    let k = p.powi(r as i32) * f64::from(w - 1) / 2.0 + 1.0;
    (1.0 - 1.0 / (f64::from(m) * k)).powi(n as i32 - 1) + p - 1.0
}

fn fixed_point() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bracket_failures = Vec::new();
    let mut count = 0;
    for n in 4..=32 {
        for m in [8, 12, 16] {
            for r in 1..=8 {
                for w in 1..=16 {
                    count += 1;
                    let p = match analytic::solve_collision_probability(&params(m, r, w), n, DEFAULT_TOLERANCE) {
                        Ok(p) => p,
                        Err(e) => {
                            bracket_failures.push(format!("({n},{m},{r},{w}): {e}"));
                            continue;
                        }
                    };
                    worst = worst.max(residual(m, r, w, n, p).abs());
                    let lo = residual(m, r, w, n, (p - 1e-6).max(0.0));
                    let hi = residual(m, r, w, n, (p + 1e-6).min(1.0));
                    if !(lo <= 0.0 && hi >= 0.0) {
                        bracket_failures.push(format!("({n},{m},{r},{w})"));
                    }
                }
            }
        }
    }
    Outcome {
        passed: worst <= 1e-12 && bracket_failures.is_empty(),
        detail: format!("{count} points, max |f(p)| = {worst:.2e}, bracket failures = {bracket_failures:?}"),
    }
}

type State = (u32, u32);

/// One-step mass flow of the single-station rule, keyed by `(counter, backoff)`.
fn transition(p: f64, r_lim: u32, w_lim: u32) -> HashMap<(State, State), f64> {
    let mut t = HashMap::new();
    for r in 0..=r_lim {
        for w in 0..w_lim {
            if r < r_lim && w > 0 {
                continue;
            }
            let from = (r, w);
            if w > 0 {
                *t.entry((from, (r, w - 1))).or_insert(0.0) += 1.0;
                continue;
            }
            *t.entry((from, (0, 0))).or_insert(0.0) += 1.0 - p;
            if r + 1 < r_lim {
                *t.entry((from, (r + 1, 0))).or_insert(0.0) += p;
            } else {
                for b in 0..w_lim {
                    *t.entry((from, (r_lim, b))).or_insert(0.0) += p / f64::from(w_lim);
                }
            }
        }
    }
    t
}

fn steady_state_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut worst_sum, mut worst_balance): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let p: f64 = rng.random_range(0.0..0.999);
        let r = rng.random_range(1..=20u32);
        let w = rng.random_range(1..=20u32);
        let ss = analytic::steady_state(&params(8, r, w), p);
        let prob = |s: (u32, u32)| if s.0 < r { ss.pi_active[s.0 as usize] } else { ss.pi_backoff[s.1 as usize] };
        worst_sum = worst_sum.max((ss.total() - 1.0).abs());
        let mut inflow: HashMap<(u32, u32), f64> = HashMap::new();
        for ((from, to), q) in transition(p, r, w) {
            *inflow.entry(to).or_insert(0.0) += prob(from) * q;
        }
        for (state, mass) in inflow {
            worst_balance = worst_balance.max((mass - prob(state)).abs());
        }
    }
    Outcome {
        passed: worst_sum <= 1e-12 && worst_balance <= 1e-10,
        detail: format!("100 cases, max |sum - 1| = {worst_sum:.2e}, max |(P pi - pi)_i| = {worst_balance:.2e}"),
    }
}

fn latency_closed_form() -> Outcome {
    let pr = ProtocolParams::default();
    let mut worst: f64 = 0.0;
    for k in 1..=9 {
        let p = f64::from(k) / 10.0;
        worst = worst.max(rel(analytic::latency_series(&pr, p, 500), analytic::latency(&pr, p)));
    }
    Outcome { passed: worst <= 1e-6, detail: format!("max relative gap {worst:.2e}") }
}

fn oracle_equivalence() -> Outcome {
    let rep = suites::oracle_suite(&ValidateSection::default(), 1, &UniformBackoff);
    Outcome {
        passed: rep.passed && rep.checks >= 8,
        detail: format!(
            "{} instances, worst |sim - exact| / CI = {:.2}, failures = {:?}",
            rep.checks,
            rep.worst_ratio,
            rep.failures.iter().map(|f| &f.case).collect::<Vec<_>>()
        ),
    }
}

struct DeskRuns {
    /// `(N, M)` at defaults otherwise.
    points: HashMap<(u32, u32), SimReport>,
    short_retry: SimReport,
}

fn desk_runs() -> DeskRuns {
    let grid = Grid {
        stations: (1..=8).map(|k| 4 * k).collect(),
        slots: vec![8, 12, 16],
        retry_limits: vec![8],
        contention_windows: vec![8],
    };
    let points = sim::sweep(&ProtocolParams::default(), &grid, &desk_net(4))
        .unwrap()
        .into_iter()
        .map(|(pt, r)| ((pt.stations, pt.slots), r))
        .collect();
    let short_retry = sim::run(&params(8, 2, 8), &desk_net(32)).unwrap();
    DeskRuns { points, short_retry }
}

fn model_agreement(desk: &DeskRuns) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let (mut worst_s, mut worst_d): (f64, f64) = (0.0, 0.0);
    for m in [8, 12, 16] {
        for n in [8, 16, 24, 32] {
            let a = analytic::report(&params(m, 8, 8), n).unwrap();
            let s = &desk.points[&(n, m)];
            worst_s = worst_s.max(rel(s.s_emp, a.s));
            worst_d = worst_d.max(rel(s.d_emp, a.d));
        }
    }
    ok &= worst_s < 0.05 && worst_d < 0.07;
    lines.push(format!("max |dS|/S = {worst_s:.4}, max |dD|/D = {worst_d:.4}"));

    let p4 = desk.points[&(4, 8)].p_hat_s_emp;
    let p32 = desk.points[&(32, 8)].p_hat_s_emp;
    let a4 = analytic::report(&params(8, 8, 8), 4).unwrap().p_hat_s;
    let a32 = analytic::report(&params(8, 8, 8), 32).unwrap().p_hat_s;
    let read_off = p4 > 0.80 && p32 < 0.20;
    ok &= read_off;
    lines.push(format!(
        "p_hat_s(N=4) = {p4:.4} [model {a4:.4}] (> 0.80), p_hat_s(N=32) = {p32:.4} [model {a32:.4}] (< 0.20)"
    ));

    let mut peaks = Vec::new();
    for m in [8, 12, 16] {
        let peak = (1..=8)
            .map(|k| desk.points[&(4 * k, m)].s_emp)
            .fold(f64::MIN, f64::max);
        let model_peak = (1..=8)
            .map(|k| analytic::report(&params(m, 8, 8), 4 * k).unwrap().s)
            .fold(f64::MIN, f64::max);
        ok &= (peak - 0.37).abs() <= 0.02 && (model_peak - 0.37).abs() <= 0.02;
        peaks.push(format!("M={m}: {peak:.4} [model {model_peak:.4}]"));
    }
    lines.push(format!("peak S within 0.37 +- 0.02: {}", peaks.join(", ")));

    let d = desk.points[&(32, 8)].d_emp;
    ok &= (d - 1.3).abs() <= 0.15;
    lines.push(format!("D(N=32, M=8) = {d:.4} s (1.3 +- 0.15)"));
    Outcome { passed: ok, detail: lines.join("; ") }
}

fn retry_limit_effect(desk: &DeskRuns) -> Outcome {
    let ratio = desk.short_retry.s_emp / desk.points[&(32, 8)].s_emp;
    let model = analytic::report(&params(8, 2, 8), 32).unwrap().s / analytic::report(&params(8, 8, 8), 32).unwrap().s;
    Outcome {
        passed: (1.2..=1.36).contains(&ratio),
        detail: format!("S(R=2)/S(R=8) = {ratio:.4} [model {model:.4}]"),
    }
}

fn approximation_quality(desk: &DeskRuns) -> Outcome {
    let mut worst: (f64, u32, u32) = (0.0, 0, 0);
    for m in [8, 12, 16] {
        for n in [8, 16, 24, 32] {
            if n < 2 * m {
                continue;
            }
            let a = analytic::report(&params(m, 8, 8), n).unwrap();
            let gap = rel(a.s_hat, desk.points[&(n, m)].s_emp);
            if gap > worst.0 {
                worst = (gap, n, m);
            }
        }
    }
    Outcome {
        passed: worst.0 < 0.08,
        detail: format!("max |S_hat - S_emp| / S_emp = {:.4} at N={} M={}", worst.0, worst.1, worst.2),
    }
}

fn enhancement() -> Outcome {
    let pr = ProtocolParams::default();
    let mut ok = true;
    let mut lines = Vec::new();
    let table = optimize::build_table(&pr, &[32], &[8, 12]).unwrap();
    let cmp = optimize::compare(&pr, &table).unwrap();
    for (c, s_band, d_band) in [(&cmp[0], 0.30..=0.40, 0.23..=0.33), (&cmp[1], 0.12..=0.22, 0.11..=0.21)] {
        let pass = s_band.contains(&c.s_gain) && d_band.contains(&c.d_reduction);
        ok &= pass;
        lines.push(format!("M={}: S gain {:.4}, D reduction {:.4}", c.slots, c.s_gain, c.d_reduction));
    }

    let mut r_star = Vec::new();
    for n in 28..=32 {
        let t = optimize::tune(&pr, n, 8).unwrap();
        ok &= t.retry_limit == 1;
        r_star.push(format!("(8,{n})->R*={},W*={}", t.retry_limit, t.contention_window));
    }
    let t16 = optimize::tune(&pr, 32, 16).unwrap();
    ok &= t16.retry_limit == 3;
    r_star.push(format!("(16,32)->R*={},W*={}", t16.retry_limit, t16.contention_window));
    lines.push(format!("joint (R, W) search: {}", r_star.join(" ")));

    // Informational: with W held at its default only R varies.
    let retry_only: Vec<String> = [(8, 28), (8, 32), (16, 32)]
        .iter()
        .map(|&(m, n)| {
            let t = optimize::tune_over(&pr, n, m, &SearchSpace::retry_only(&pr)).unwrap();
            format!("({m},{n})->R*={}", t.retry_limit)
        })
        .collect();
    lines.push(format!("W fixed at 8: {}", retry_only.join(" ")));

    let mut spots = Vec::new();
    for (n, m) in [(32, 8), (32, 12), (32, 16)] {
        let t = optimize::tune(&pr, n, m).unwrap();
        let tuned = pr.with_slots(m).with_retry_limit(t.retry_limit).with_contention_window(t.contention_window);
        let emp = sim::run(&tuned, &desk_net(n)).unwrap().s_emp;
        let gap = rel(emp, t.s);
        ok &= gap < 0.05;
        spots.push(format!("({m},{n}) {emp:.4} vs {:.4}", t.s));
    }
    lines.push(format!("simulated spot checks: {}", spots.join(", ")));
    Outcome { passed: ok, detail: lines.join("; ") }
}

fn determinism() -> Outcome {
    let net = NetworkConfig { stations: 16, bi_count: 2_000, run_count: 20, seed: 99, warmup_bi: 500 };
    let render = || {
        let grid = Grid { stations: vec![8, 16], slots: vec![8], retry_limits: vec![2, 8], contention_windows: vec![8] };
        let rows = sim::sweep(&ProtocolParams::default(), &grid, &net).unwrap();
        let analytic_rows: Vec<(GridPoint, _)> = rows
            .iter()
            .map(|(pt, _)| (*pt, analytic::report(&pt.apply(&ProtocolParams::default()), pt.stations).unwrap()))
            .collect();
        format!("{}{}", output::sim_csv(&rows), output::analytic_csv(&analytic_rows))
    };
    let a = render();
    let b = render();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(render);
    Outcome {
        passed: a == b && a == single,
        detail: format!("{} bytes, repeat identical: {}, single-thread identical: {}", a.len(), a == b, a == single),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut record = |id: u32, name: &str, budget: Duration, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_budget = took <= budget;
        let passed = out.passed && in_budget;
        if !passed {
            failed += 1;
        }
        println!(
            "[{}] {id}. {name} ({:.2?} of {:?}): {}",
            if passed { "PASS" } else { "FAIL" },
            took,
            budget,
            out.detail
        );
    };

    record(1, "fixed-point residual and bracket", Duration::from_secs(5), &mut fixed_point);
    record(2, "steady state normalisation and balance", Duration::from_secs(2), &mut steady_state_balance);
    record(3, "latency series vs closed form", Duration::from_secs(1), &mut latency_closed_form);
    record(4, "simulator vs exact joint chain", Duration::from_secs(120), &mut oracle_equivalence);

    let start = Instant::now();
    let desk = desk_runs();
    let desk_time = start.elapsed();
    record(5, "model vs simulation at desk scale", Duration::from_secs(600), &mut || {
        let mut o = model_agreement(&desk);
        o.detail = format!("simulations {desk_time:.2?}; {}", o.detail);
        o
    });
    record(6, "retry-limit gain at N=32, M=8", Duration::from_secs(600), &mut || retry_limit_effect(&desk));
    record(7, "approximation at N/M >= 2", Duration::from_secs(600), &mut || approximation_quality(&desk));
    record(8, "density-aware tuning", Duration::from_secs(300), &mut enhancement);
    record(9, "byte-identical reruns", Duration::from_secs(60), &mut determinism);

    println!("acceptance: {} of 9 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
