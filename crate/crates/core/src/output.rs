//! CSV and JSON renderings of reports.
//!
//! CSV numbers are printed with 6 significant digits (`%g` style); latency
//! is in seconds, everything else is dimensionless. Headers are part of the
//! stable interface and are pinned by golden tests.

use serde::Serialize;

use crate::analytic::AnalyticReport;
use crate::optimize::{Comparison, SlotOptimum, TableRow, TuningTable};
use crate::sim::{GridPoint, SimReport};
use crate::suites::ValidationReport;

pub const ANALYTIC_HEADER: &str = "N,M,R,W,p,tau,p_s,p_hat_s,S,S_hat,D";
pub const SIM_HEADER: &str = "N,M,R,W,metric,value,ci_half_width";
pub const SWEEP_HEADER: &str = "N,M,R,W,metric,analytic,simulated,ci_half_width";
pub const TABLE_HEADER: &str = "N,M,R_star,W_star,S_star,D_star";
pub const COMPARISON_HEADER: &str = "N,M,S_default,S_tuned,S_gain,D_default,D_tuned,D_reduction";
pub const VALIDATE_HEADER: &str = "suite,passed,checks,worst_ratio,failed_cases";

/// Formats `x` with six significant digits, trimming trailing zeros.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn point_prefix(pt: &GridPoint) -> String {
    format!("{},{},{},{}", pt.stations, pt.slots, pt.retry_limit, pt.contention_window)
}

pub fn analytic_csv(rows: &[(GridPoint, AnalyticReport)]) -> String {
    let mut out = String::from(ANALYTIC_HEADER);
    out.push('\n');
    for (pt, r) in rows {
        let vals = [r.p, r.tau, r.p_s, r.p_hat_s, r.s, r.s_hat, r.d].map(sig6);
        out.push_str(&format!("{},{}\n", point_prefix(pt), vals.join(",")));
    }
    out
}

fn sim_metrics(r: &SimReport) -> [(&'static str, f64, f64); 5] {
    let ci = &r.ci_half_widths;
    [
        ("p_hat_s", r.p_hat_s_emp, ci.p_hat_s),
        ("S", r.s_emp, ci.s),
        ("D", r.d_emp, ci.d),
        ("p_cond", r.p_cond_emp, ci.p_cond),
        ("collisions_per_bi", r.collisions_per_bi, f64::NAN),
    ]
}

/// Long format: one row per `(point, metric)`.
pub fn sim_csv(rows: &[(GridPoint, SimReport)]) -> String {
    let mut out = String::from(SIM_HEADER);
    out.push('\n');
    for (pt, r) in rows {
        for (name, value, ci) in sim_metrics(r) {
            let ci = if ci.is_nan() { String::new() } else { sig6(ci) };
            out.push_str(&format!("{},{name},{},{ci}\n", point_prefix(pt), sig6(value)));
        }
    }
    out
}

/// Analytic curve next to the simulated point for each metric.
pub fn sweep_csv(rows: &[(GridPoint, AnalyticReport, SimReport)]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for (pt, a, s) in rows {
        let ci = &s.ci_half_widths;
        let metrics = [
            ("p_hat_s", a.p_hat_s, s.p_hat_s_emp, ci.p_hat_s),
            ("S", a.s, s.s_emp, ci.s),
            ("S_hat", a.s_hat, s.s_emp, ci.s),
            ("D", a.d, s.d_emp, ci.d),
            ("p", a.p, s.p_cond_emp, ci.p_cond),
        ];
        for (name, an, sim, ci) in metrics {
            out.push_str(&format!("{},{name},{},{},{}\n", point_prefix(pt), sig6(an), sig6(sim), sig6(ci)));
        }
    }
    out
}

pub fn table_csv(table: &TuningTable) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.stations,
            r.slots,
            r.retry_limit,
            r.contention_window,
            sig6(r.s),
            sig6(r.d)
        ));
    }
    out
}

pub fn comparison_csv(rows: &[Comparison]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for c in rows {
        let vals = [c.s_default, c.s_tuned, c.s_gain, c.d_default, c.d_tuned, c.d_reduction].map(sig6);
        out.push_str(&format!("{},{},{}\n", c.stations, c.slots, vals.join(",")));
    }
    out
}

/// One row per suite; failed case labels are joined with `;`.
pub fn validation_csv(report: &ValidationReport) -> String {
    let mut out = String::from(VALIDATE_HEADER);
    out.push('\n');
    for s in &report.suites {
        let cases: Vec<&str> = s.failures.iter().map(|f| f.case.as_str()).collect();
        out.push_str(&format!(
            "{},{},{},{},\"{}\"\n",
            s.name,
            s.passed,
            s.checks,
            sig6(s.worst_ratio),
            cases.join(";")
        ));
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise to JSON");
    s.push('\n');
    s
}

#[derive(Serialize)]
pub struct PointReport<'a, R: Serialize> {
    #[serde(flatten)]
    pub point: GridPoint,
    #[serde(flatten)]
    pub report: &'a R,
}

#[derive(Serialize)]
pub struct SweepPoint<'a> {
    #[serde(flatten)]
    pub point: GridPoint,
    pub analytic: &'a AnalyticReport,
    pub simulated: &'a SimReport,
}

#[derive(Serialize)]
pub struct SlotOptimumRow {
    #[serde(rename = "N")]
    pub stations: u32,
    #[serde(rename = "R")]
    pub retry_limit: u32,
    #[serde(rename = "W")]
    pub contention_window: u32,
    #[serde(flatten)]
    pub optimum: SlotOptimum,
}

#[derive(Serialize)]
pub struct OptimizeOutput<'a> {
    pub table: &'a [TableRow],
    pub comparison: &'a [Comparison],
    pub slot_optimum: &'a [SlotOptimumRow],
}
