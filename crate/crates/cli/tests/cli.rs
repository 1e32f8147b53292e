//! End-to-end runs of the `svspec` binary on the files in `data/`.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).to_string_lossy().into_owned()
}

fn svspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svspec")).args(args).env_remove("SVSPEC_THREADS").output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = svspec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn ok_csv(args: &[&str]) -> Vec<Vec<String>> {
    let out = svspec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    text.lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn code(args: &[&str]) -> i32 {
    svspec(args).status.code().expect("exit code")
}

#[test]
fn free_spectrum_has_full_multiplicity() {
    let ds = ok_json(&["spectrum", &data("zero2.json"), "--lmax", "500"]);
    let recs = ds["records"].as_array().unwrap();
    assert_eq!(recs.len(), 7);
    for (i, r) in recs.iter().enumerate() {
        let n = (i + 1) as f64;
        assert_eq!(r["k"], 2);
        assert!((r["lambda"].as_f64().unwrap() - PI * PI * n * n).abs() < 1e-8 * n * n);
    }
}

#[test]
fn constant_diagonal_spectrum_is_shifted() {
    let rows = ok_csv(&["spectrum", &data("diag12.json"), "--lmax", "1000", "--format", "csv"]);
    assert_eq!(rows[0], ["lambda", "k", "n", "j"]);
    for r in &rows[1..] {
        let lam: f64 = r[0].parse().unwrap();
        let n = (lam / (PI * PI)).sqrt().round();
        let shift = lam - PI * PI * n * n;
        assert!((shift - 1.0).abs() < 1e-7 || (shift - 2.0).abs() < 1e-7, "{lam}");
        assert_eq!(r[1], "1");
    }
}

#[test]
fn free_weyl_function_and_pole_flag() {
    let rows = ok_csv(&["mfun", &data("zero2.json"), "--lambda-grid", "-10:-1:10"]);
    for r in &rows[1..] {
        let lam: f64 = r[0].parse().unwrap();
        let s = (-lam).sqrt();
        let want = -s / s.tanh();
        let m11: f64 = r[2].parse().unwrap();
        let m22: f64 = r[8].parse().unwrap();
        assert!((m11 - want).abs() < 1e-9 && (m22 - want).abs() < 1e-9);
    }
    let pole = format!("{}", PI * PI);
    let rows = ok_csv(&["mfun", &data("zero2.json"), "--lambda-grid", &format!("{pole},20")]);
    assert_eq!(rows[1].last().unwrap(), "near_pole");
    assert_eq!(rows[2].last().unwrap(), "");
}

#[test]
fn series_agrees_with_direct_evaluation() {
    let v = ok_json(&["mfun", &data("trig2.json"), "--lambda-grid", "-5,3.5,60", "--imag", "0.5", "--mode", "compare", "--lmax", "400000", "--format", "json"]);
    let gap = v["max_gap"].as_f64().unwrap();
    assert!(gap <= 1e-4, "gap {gap}");
}

#[test]
fn checks_on_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let free = dir.path().join("free.json");
    let short = dir.path().join("short.json");
    let free_s = free.to_str().unwrap();
    let short_s = short.to_str().unwrap();
    let lmax = format!("{}", PI * PI * 30.0 * 30.0);
    assert_eq!(code(&["spectrum", &data("cos_scalar.json"), "--lmax", &lmax, "--out", free_s]), 0);
    assert_eq!(code(&["spectrum", &data("diag12.json"), "--lmax", "2000", "--out", short_s]), 0);
    for which in ["A", "B", "equiv"] {
        assert_eq!(ok_json(&["check", free_s, "--which", which])["pass"], true, "{which}");
    }
    let bn = ok_json(&["check", free_s, "--which", "Bn", "--potential", &data("cos_scalar.json")]);
    assert!(bn["report"]["exponent"].as_f64().unwrap() <= -1.8);
    assert_eq!(code(&["check", short_s, "--which", "B"]), 3);
    assert_eq!(code(&["check", short_s, "--which", "Bn"]), 64);
}

#[test]
fn inverse_tasks() {
    let frame = data("frame_diag12.json");
    let t = ok_json(&["inverse", "--task", "tildes", "--frame", &frame]);
    assert_eq!(t["pass"], true);
    for lv in t["levels"].as_array().unwrap() {
        assert!(lv["a_tilde_max"].as_f64().unwrap() <= 1e-8);
    }
    let c = ok_json(&["inverse", "--task", "condC", "--set", &data("condc_scalar.json")]);
    assert!((c["T"][0][0][0].as_f64().unwrap() - 0.25).abs() < 1e-6);
    assert_eq!(c["holds"], true);
    assert_eq!(c["m"], 1);
    let b = ok_json(&["inverse", "--task", "biortho", "--frame", &frame, "--levels", "4"]);
    assert_eq!(b["pass"], true);
    let f = ok_json(&["inverse", "--task", "frechet-check", "--frame", &frame, "--seed", "42"]);
    assert_eq!(f["passing"], 20);
    assert_eq!(f["seed"], 42);
}

#[test]
fn scalar_tools() {
    let rows = ok_csv(&["scalar", &data("free_lambda_mu.csv"), "--convert", "mu:alpha"]);
    assert_eq!(rows[0], ["n", "lambda", "mu", "alpha"]);
    for r in &rows[1..] {
        let n: f64 = r[0].parse().unwrap();
        let a: f64 = r[3].parse().unwrap();
        assert!((a * 2.0 * PI * PI * n * n - 1.0).abs() < 1e-9);
    }
    let h = ok_json(&["scalar", &data("delta1.csv"), "--hilbert", "half_shifted", "--l-out", "10000", "--format", "json"]);
    assert!((h["norm_out"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("unsorted.csv");
    std::fs::write(&bad, "n,lambda\n1,40\n2,10\n3,90\n").unwrap();
    assert_eq!(code(&["scalar", bad.to_str().unwrap(), "--characterize"]), 4);
}

#[test]
fn reports_are_deterministic() {
    let args = ["inverse", "--task", "condC", "--set", &data("condc_scalar.json"), "--seed", "7"];
    let a = svspec(&args).stdout;
    let b = svspec(&args).stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["spectrum", "/nonexistent/potential.json", "--lmax", "10"]), 74);
    assert_eq!(code(&["spectrum", &data("zero2.json")]), 64);
    assert_eq!(code(&["--rel-tol", "0.5", "spectrum", &data("zero2.json"), "--lmax", "10"]), 64);
    let dir = tempfile::tempdir().unwrap();
    let nh = dir.path().join("nh.json");
    std::fs::write(&nh, r#"{"N":2,"repr":"fourier","mean":[[[0,0],[1,0]],[[0,0],[0,0]]]}"#).unwrap();
    assert_eq!(code(&["spectrum", nh.to_str().unwrap(), "--lmax", "10"]), 1);
    let help = String::from_utf8(svspec(&["--help"]).stdout).unwrap();
    for c in 1..=6 {
        assert!(help.contains(&format!("  {c}  ")), "exit code {c} undocumented");
    }
}

#[test]
fn thread_variable_overrides_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_svspec"))
        .args(["--threads", "2", "scalar", &data("delta1.csv"), "--hilbert", "full_integer", "--l-out", "5"])
        .env("SVSPEC_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = Command::new(env!("CARGO_BIN_EXE_svspec"))
        .args(["--threads", "0", "scalar", &data("delta1.csv"), "--hilbert", "full_integer", "--l-out", "5"])
        .env("SVSPEC_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
