use std::fs;
use std::process::{Command, Output};

fn abft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abft"))
        .args(args)
        .env_remove("ABFT_THREADS")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("")
}

const SMALL_SIM: [&str; 6] = ["--set", "bi_count=600", "--set", "run_count=8", "--set", "warmup_bi=100"];

#[test]
fn golden_headers() {
    let cases: [(&str, &[&str], &str); 5] = [
        ("analytic", &[], "N,M,R,W,p,tau,p_s,p_hat_s,S,S_hat,D"),
        ("simulate", &SMALL_SIM, "N,M,R,W,metric,value,ci_half_width"),
        ("sweep", &SMALL_SIM, "N,M,R,W,metric,analytic,simulated,ci_half_width"),
        ("optimize", &[], "N,M,R_star,W_star,S_star,D_star"),
        ("validate", &["--set", "oracle_runs=20", "--set", "oracle_bi=500"], "suite,passed,checks,worst_ratio,failed_cases"),
    ];
    for (mode, extra, header) in cases {
        let mut args = vec!["--mode", mode];
        args.extend_from_slice(extra);
        let out = abft(&args);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(first_line(&stdout(&out)), header, "{mode}");
    }
}

#[test]
fn optimize_writes_table_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    let out = abft(&["--mode", "optimize", "--set", "N=1,32", "--set", "M=8,12", "--out", table.to_str().unwrap()]);
    assert!(out.status.success());
    let table = fs::read_to_string(&table).unwrap();
    let cmp = fs::read_to_string(dir.path().join("table.comparison.csv")).unwrap();
    assert_eq!(first_line(&cmp), "N,M,S_default,S_tuned,S_gain,D_default,D_tuned,D_reduction");
    assert!(table.lines().any(|l| l.starts_with("1,8,1,1,")));

    let row = cmp.lines().find(|l| l.starts_with("32,8,")).unwrap();
    let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cols[4] - 0.35).abs() < 0.05, "S gain {}", cols[4]);
    assert!((cols[7] - 0.28).abs() < 0.05, "D reduction {}", cols[7]);
    let row = cmp.lines().find(|l| l.starts_with("32,12,")).unwrap();
    let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cols[4] - 0.17).abs() < 0.05);
    assert!((cols[7] - 0.16).abs() < 0.05);
}

#[test]
fn analytic_json_at_sixteen_stations() {
    let out = abft(&["--mode", "analytic", "--set", "N=16", "--format", "json"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let field = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.trim_start().starts_with(&format!("\"{name}\":"))).unwrap();
        line.split(':').nth(1).unwrap().trim().trim_end_matches(',').parse().unwrap()
    };
    assert!((field("p") - 0.758).abs() < 1e-3);
    assert!((field("S") - 0.349).abs() < 1e-3);
}

#[test]
fn single_station_row() {
    let out = abft(&["--mode", "analytic", "--set", "N=1"]);
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("1,8,8,8,0,1,1,1,0.125,"), "{row}");
}

#[test]
fn repeated_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a.csv", "b.csv"].iter().map(|n| dir.path().join(n)).collect();
    for p in &paths {
        let mut args = vec!["--mode", "sweep", "--seed", "42", "--set", "N=8,24", "--out", p.to_str().unwrap()];
        args.extend_from_slice(&SMALL_SIM);
        assert!(abft(&args).status.success());
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());

    let mut args = vec!["--mode", "sweep", "--seed", "43", "--set", "N=8,24"];
    args.extend_from_slice(&SMALL_SIM);
    assert_ne!(stdout(&abft(&args)).into_bytes(), fs::read(&paths[0]).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let mut args = vec!["--mode", "simulate", "--set", "N=16"];
    args.extend_from_slice(&SMALL_SIM);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_abft")).args(&args).env("ABFT_THREADS", threads).output().unwrap()
    };
    let (one, four) = (run("1"), run("4"));
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(run("zero").status.code(), Some(1));
}

#[test]
fn config_file_and_layering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[protocol]\nM = 12\n\n[network]\nN = 20\n\n[sweep]\nN = [4, 8]\n").unwrap();
    let out = abft(&["--config", cfg.to_str().unwrap(), "--mode", "analytic", "--set", "R=2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("4,12,2,8,"));
    assert!(rows[1].starts_with("8,12,2,8,"));

    fs::write(&cfg, "[protocol]\nslotz = 3\n").unwrap();
    assert_eq!(abft(&["--config", cfg.to_str().unwrap(), "--mode", "analytic"]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(abft(&["--mode", "analytic", "--set", "M=0"]).status.code(), Some(1));
    assert_eq!(abft(&["--mode", "analytic", "--set", "R=25"]).status.code(), Some(1));
    assert_eq!(abft(&["--mode", "analytic", "--set", "nonsense"]).status.code(), Some(1));
    assert_eq!(abft(&["--mode", "analytic", "--config", "/nonexistent/abft.toml"]).status.code(), Some(2));
    assert_eq!(abft(&["--mode", "analytic", "--out", "/nonexistent/dir/out.csv"]).status.code(), Some(2));
    // One slot and no backoff spread: every attempt collides.
    assert_eq!(abft(&["--mode", "analytic", "--set", "M=1", "--set", "W=1", "--set", "N=4"]).status.code(), Some(3));
}

#[test]
fn validate_pass_and_failure() {
    let fast = ["--set", "oracle_runs=40", "--set", "oracle_bi=1000"];
    let mut args = vec!["--mode", "validate", "--set", "balance_tol=1e-13"];
    args.extend_from_slice(&fast);
    let out = abft(&args);
    assert!(out.status.success(), "{}", stdout(&out));

    let mut args = vec!["--mode", "validate", "--format", "json", "--set", "latency_rel_tol=0"];
    args.extend_from_slice(&fast);
    let out = abft(&args);
    assert_eq!(out.status.code(), Some(4));
    let text = stdout(&out);
    assert!(text.contains("\"passed\": false"));
    assert!(text.contains("\"name\": \"latency\""));
}
