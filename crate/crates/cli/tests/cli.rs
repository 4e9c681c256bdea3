//! End-to-end tests driving the installed binary through its subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use approx::assert_abs_diff_eq;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delaywave"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A smooth problem: single-mode forcing, polynomial-in-x history, zero
/// boundary data. Small enough that every subcommand finishes in well under
/// a second.
const SMOOTH: &str = r#"
[problem]
a1 = 1.0
a2 = 0.5
b1 = 0.0
b2 = 0.0
c1 = 0.0
c2 = 0.0
tau = 1.0
t_end = 2.0
length = 3.141592653589793
g = "sin(x)*t"
psi = "x*(pi-x)*(1+t/2)"
theta1 = "0"
theta2 = "0"
theta1_dd = "0"
theta2_dd = "0"

[solver]
n_modes = 16

[oracle]
nx = 64
m_per_tau = 200

[output]
t_points = 13
x_points = 9
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

struct Csv {
    rows: Vec<(f64, f64, f64)>,
}

fn read_csv(path: &Path) -> Csv {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# delaywave-csv/1\n"), "missing schema header in {}", path.display());
    assert!(!text.contains('\r'), "CRLF leaked into {}", path.display());
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if line.starts_with('#') {
            continue;
        }
        if !saw_header {
            assert_eq!(line, "t,x,value");
            saw_header = true;
            continue;
        }
        let mut parts = line.split(',').map(|s| s.parse::<f64>().unwrap());
        rows.push((parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap()));
    }
    Csv { rows }
}

impl Csv {
    fn value_at(&self, t: f64, x: f64) -> f64 {
        self.rows
            .iter()
            .find(|r| (r.0 - t).abs() < 1e-12 && (r.1 - x).abs() < 1e-12)
            .unwrap_or_else(|| panic!("no row at ({t}, {x})"))
            .2
    }
}

#[test]
fn solve_writes_schema_tagged_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out_dir = dir.path().join("out");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "solve"]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let u = read_csv(&out_dir.join("u.csv"));
    let v = read_csv(&out_dir.join("v.csv"));
    assert_eq!(u.rows.len(), 13 * 9);
    assert_eq!(v.rows.len(), 13 * 9);
    // zero boundary data and alpha = 0, so u and v coincide
    for (ur, vr) in u.rows.iter().zip(&v.rows) {
        assert_abs_diff_eq!(ur.2, vr.2, epsilon = 1e-14);
    }

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["schema"], "delaywave-meta/1");
    assert_eq!(meta["alpha"], 0.0);
    assert_eq!(meta["modes"].as_array().unwrap().len(), 16);
    assert_eq!(meta["truncation"]["n_modes"], 16);
    assert_eq!(meta["modes"][0]["omega_sq"], 1.0);
    assert!(meta["wall_time_ms"].is_u64());
    assert_eq!(meta["config"]["solver"]["n_modes"], 16);
}

#[test]
fn zero_data_solves_to_zero_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMOOTH.replace("g = \"sin(x)*t\"", "g = \"0\"").replace("psi = \"x*(pi-x)*(1+t/2)\"", "psi = \"0\""),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "solve"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for file in ["u.csv", "v.csv"] {
        let csv = read_csv(&out_dir.join(file));
        for r in &csv.rows {
            assert_eq!(r.2, 0.0, "nonzero {file} entry at ({}, {})", r.0, r.1);
        }
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let out = run(&["--config", "/definitely/not/here.toml", "solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("configuration error"));
}

#[test]
fn incompatible_first_order_coefficients_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SMOOTH.replace("b1 = 0.0", "b1 = 1.0"));
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("incompatible"), "stderr: {}", stderr_of(&out));
}

#[test]
fn malformed_expression_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SMOOTH.replace("g = \"sin(x)*t\"", "g = \"sin(x*\""));
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("problem.g"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMOOTH}\nmystery = 3\n"));
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn misaligned_horizon_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SMOOTH.replace("t_end = 2.0", "t_end = 2.5"));
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(2));
}

fn read_kernel_csv(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# delaywave-csv/1\n"));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
        .map(|l| l.split(',').map(|s| s.parse().unwrap()).collect())
        .collect()
}

#[test]
fn kernels_reduce_to_cosine_without_delay_term() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "--out", dir.path().to_str().unwrap(),
        "kernels", "--a=-1", "--b=0", "--tau=1", "--t-max=3", "--dt=0.125",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rows = read_kernel_csv(&dir.path().join("kernels.csv"));
    assert_eq!(rows.len(), 25);
    for row in &rows {
        let t = row[0];
        assert_abs_diff_eq!(row[1], t.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(row[2], -t.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(row[5], t.sin(), epsilon = 1e-12);
        // no delayed term, so curvature has no jump anywhere
        assert_abs_diff_eq!(row[3], row[4], epsilon = 1e-12);
        assert_abs_diff_eq!(row[7], -t.sin(), epsilon = 1e-12);
    }
}

#[test]
fn kernels_pure_delay_case_matches_hand_sum() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "--out", dir.path().to_str().unwrap(),
        "kernels", "--a=0", "--b=1", "--tau=1", "--t-max=2", "--dt=0.5",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rows = read_kernel_csv(&dir.path().join("kernels.csv"));
    // C(t) = 1 + (t-1)^2/2 + (t-2)^4/24 on [0, 3)
    let row = rows.iter().find(|r| r[0] == 1.5).expect("t = 1.5 row");
    assert_abs_diff_eq!(row[1], 1.125, epsilon = 1e-12);
    // curvature jumps by b across t = tau
    let knot = rows.iter().find(|r| r[0] == 1.0).expect("t = 1.0 row");
    assert_abs_diff_eq!(knot[4] - knot[3], 1.0, epsilon = 1e-10);
}

#[test]
fn kernels_reject_bad_spacing() {
    let out = run(&["kernels", "--a=-1", "--b=0", "--tau=1", "--t-max=2", "--dt=0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_restricts_to_the_output_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out_dir = dir.path().join("out");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "oracle"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let fd = read_csv(&out_dir.join("v_fd.csv"));
    assert_eq!(fd.rows.len(), 13 * 9);
    // history rows reproduce the data exactly; x snaps to the fd lattice
    let x = (16.0 / 64.0) * std::f64::consts::PI;
    let expect = x * (std::f64::consts::PI - x) * 0.5;
    assert_abs_diff_eq!(fd.value_at(-1.0, x), expect, epsilon = 1e-12);
}

#[test]
fn compare_reports_small_error_on_smooth_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out_dir = dir.path().join("out");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "compare"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("compare.json")).unwrap()).unwrap();
    assert_eq!(rep["schema"], "delaywave-compare/1");
    let l2 = rep["l2_err"].as_f64().unwrap();
    assert!(l2 < 5e-3, "interior l2 error {l2} too large for the smooth problem");
    assert!(rep["sup_err"].as_f64().unwrap() < 5e-2);
    assert!(rep["worst_point"].as_array().unwrap().len() == 2);
}

#[test]
fn diagnose_classifies_smooth_history_decay() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out_dir = dir.path().join("out");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "diagnose"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("decay.json")).unwrap()).unwrap();
    // x(pi - x) has sine coefficients ~ n^-3: measurable, below the K+3 bar
    let p = rep["exponents"]["history_value"].as_f64().unwrap();
    assert!((p - 3.0).abs() < 0.2, "history exponent {p}");
    assert_eq!(rep["pass_flags"]["history_value"], false);
    // single-mode forcing leaves nothing in the tail to fit
    assert_eq!(rep["exponents"]["forcing_sup"], serde_json::Value::Null);
    assert_eq!(rep["pass_flags"]["forcing_sup"], true);
    assert_eq!(rep["K"], 2);
}

#[test]
fn runs_are_bit_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out_dir, threads) in [(&out_a, "1"), (&out_b, "3")] {
        let out = run(&[
            "--config", cfg.to_str().unwrap(),
            "--out", out_dir.to_str().unwrap(),
            "--threads", threads,
            "solve",
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for file in ["u.csv", "v.csv"] {
        let a = fs::read(out_a.join(file)).unwrap();
        let b = fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn thread_env_must_be_a_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "solve"])
        .env("DELAYWAVE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("DELAYWAVE_THREADS"));
}

#[test]
fn bundled_demo_reproduces_the_history_value_at_onset() {
    let dir = TempDir::new().unwrap();
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "solve"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    // at t = 0 the solution hands over from the history: u = exp(-x/2);
    // the truncated series carries a ~1/N projection tail on top
    let u = read_csv(&dir.path().join("u.csv"));
    let x = std::f64::consts::FRAC_PI_2;
    let t0 = u
        .rows
        .iter()
        .find(|r| r.0.abs() < 1e-9 && (r.1 - x).abs() < 1e-12)
        .expect("row at (0, pi/2)");
    let expect = (-std::f64::consts::FRAC_PI_4).exp();
    assert!(
        (t0.2 - expect).abs() < 5e-2,
        "u(0, pi/2) = {} vs exp(-pi/4) = {expect}",
        t0.2
    );
}

#[test]
fn meta_embeds_a_rerunnable_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMOOTH);
    let out_a = dir.path().join("a");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap(), "solve"]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("meta.json")).unwrap()).unwrap();
    let embedded: toml::Value = serde_json::from_value(meta["config"].clone()).unwrap();
    let cfg2 = dir.path().join("rerun.toml");
    fs::write(&cfg2, toml::to_string(&embedded).unwrap()).unwrap();

    let out_b = dir.path().join("b");
    let out = run(&["--config", cfg2.to_str().unwrap(), "--out", out_b.to_str().unwrap(), "solve"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(fs::read(out_a.join("u.csv")).unwrap(), fs::read(out_b.join("u.csv")).unwrap());
    assert_eq!(fs::read(out_a.join("v.csv")).unwrap(), fs::read(out_b.join("v.csv")).unwrap());
}
