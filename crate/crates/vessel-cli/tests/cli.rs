//! End-to-end CLI behavior: exit codes, file formats, determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vessel-lab"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vessel_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn vessel-lab")
}

fn exp_file() -> PathBuf {
    let path = tmp("exp1.json");
    let out = run(&[
        "soliton",
        "--which",
        "exp",
        "--mu",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn soliton_roundtrips_through_validate() {
    let path = exp_file();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("status: ok"));
    assert!(text.contains("symmetric: false"));
}

#[test]
fn validate_exit_codes() {
    // Broken Lyapunov: exit 1, residual printed.
    let broken = tmp("broken.json");
    std::fs::write(
        &broken,
        r#"{"dim":1,"A":[[[1.0,0.0]]],"A_zeta":[[[1.5,0.0]]],"X0":[[[1.0,0.0]]],
           "B0":[[[1,0],[0,0],[0,0]]],"C0":[[[1,0]],[[0,0]],[[0,0]]],"x0":0.0,"t0":0.0}"#,
    )
    .unwrap();
    let out = run(&["validate", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lyapunov_residual"));

    // Truncated file: exit 2 with a diagnostic.
    let trunc = tmp("trunc.json");
    std::fs::write(&trunc, r#"{"dim":1,"A":[[[1.0,0.0"#).unwrap();
    let out = run(&["validate", trunc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn sample_rows_and_header_contract() {
    let path = exp_file();
    let csv = tmp("sample.csv");
    let out = run(&[
        "sample",
        path.to_str().unwrap(),
        "--nx",
        "41",
        "--nt",
        "21",
        "--fields",
        "q,p,tau,pi11",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,t,re_q,im_q,re_p,im_p,re_tau,im_tau,re_pi11,im_pi11,masked"
    );
    assert_eq!(lines.count(), 41 * 21);
}

#[test]
fn sample_deterministic_across_runs_and_workers() {
    let path = exp_file();
    let mut outputs = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = bin()
            .args([
                "sample",
                path.to_str().unwrap(),
                "--nx",
                "21",
                "--nt",
                "11",
                "--fields",
                "q,tau",
            ])
            .env("VESSEL_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn residual_beta_auto_and_wrong_beta() {
    let path = exp_file();
    let report = tmp("residual.txt");
    let out = run(&[
        "residual",
        path.to_str().unwrap(),
        "--nx",
        "17",
        "--nt",
        "9",
        "--beta",
        "auto",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&report).unwrap();
    let beta_line = text
        .lines()
        .find(|l| l.starts_with("calibrated_beta:"))
        .expect("calibrated beta in report");
    let beta: f64 = beta_line.split(':').nth(1).unwrap().trim().parse().unwrap();
    assert!((beta - 1.0 / 3.0).abs() < 1e-9, "beta = {beta}");
    assert!(text.contains("# errata"));

    // The wrong normalization fails the threshold.
    let out = run(&[
        "residual",
        path.to_str().unwrap(),
        "--nx",
        "17",
        "--nt",
        "9",
        "--beta",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn residual_trivial_vessel_is_zero() {
    let trivial = tmp("trivial.json");
    std::fs::write(
        &trivial,
        r#"{"dim":1,"A":[[[1.0,0.0]]],"A_zeta":[[[-1.0,0.0]]],"X0":[[[1.0,0.0]]],
           "B0":[[[0,0],[0,0],[0,0]]],"C0":[[[0,0]],[[0,0]],[[0,0]]],"x0":0.0,"t0":0.0}"#,
    )
    .unwrap();
    let out = run(&[
        "residual",
        trivial.to_str().unwrap(),
        "--nx",
        "9",
        "--nt",
        "9",
        "--beta",
        "0.3333333333333333",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn scattering_residuals_within_bounds() {
    let path = exp_file();
    let out = run(&[
        "scattering",
        path.to_str().unwrap(),
        "--lambda",
        "5+2i",
        "--x",
        "0.3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let grab = |key: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(key))
            .unwrap()
            .split(':')
            .nth(1)
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!(grab("transfer_ode_residual") <= 1e-6);
    assert!(grab("backlund_output_lde_residual") <= 1e-5);
    assert!(grab("backlund_third_order_residual") <= 1e-5);
}

#[test]
fn atlas_flags_complex_mu_classic() {
    let classic = tmp("classic_complex.json");
    let out = run(&[
        "soliton",
        "--which",
        "classic",
        "--mu",
        "1+0.3i",
        "--out",
        classic.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    // The tau zero sits where cosh((sqrt3/2) mu (x + mu t)) vanishes; center
    // the grid on it so a node lands on the zero curve.
    let mu = num_complex::Complex64::new(1.0, 0.3);
    let wstar = num_complex::Complex64::i() * std::f64::consts::PI / (3.0f64.sqrt() * mu);
    let t_star = wstar.im / mu.im;
    let x_star = wstar.re - mu.re * t_star;
    let fmt = |v: f64| format!("{v:.17e}");
    let out = run(&[
        "atlas",
        classic.to_str().unwrap(),
        "--x0",
        &fmt(x_star - 0.5),
        "--x1",
        &fmt(x_star + 0.5),
        "--nx",
        "41",
        "--t0",
        &fmt(t_star - 0.5),
        "--t1",
        &fmt(t_star + 0.5),
        "--nt",
        "41",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8(out.stderr).unwrap();
    let flagged: usize = stderr
        .split("flagged cells: ")
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(flagged >= 1, "{stderr}");
}

#[test]
fn fully_masked_grid_is_numeric_failure() {
    // X0 identically zero: every cell is singular, sample must exit 1.
    let degenerate = tmp("degenerate.json");
    std::fs::write(
        &degenerate,
        r#"{"dim":1,"A":[[[1.0,0.0]]],"A_zeta":[[[1.0,0.0]]],"X0":[[[0.0,0.0]]],
           "B0":[[[0,0],[0,0],[0,0]]],"C0":[[[0,0]],[[0,0]],[[0,0]]],"x0":0.0,"t0":0.0}"#,
    )
    .unwrap();
    let out = run(&[
        "sample",
        degenerate.to_str().unwrap(),
        "--nx",
        "5",
        "--nt",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("masked"));
}

#[test]
fn bad_flags_are_input_errors() {
    let path = exp_file();
    let out = run(&["sample", path.to_str().unwrap(), "--fields", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["sample", path.to_str().unwrap(), "--nx", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "soliton",
        "--which",
        "exp",
        "--mu",
        "0",
        "--out",
        "/tmp/x.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
