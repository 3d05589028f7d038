//! End-to-end checks of the command-line frontend: exit codes, output
//! files and byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lcris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcris"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const SMALL_SCENARIO: &str = r#"
[layout]
rows = 12
cols = 10
grid = "triangular"

[excitation]
f_start_hz = 57e9
f_stop_hz = 63e9
f_points = 21

[target]
theta_r_deg = 30.0

[grid]
theta_points = 361

[tolerance]
kind = "random"
sigma_m = 0.3e-6
corr_len_m = 3e-3
seed = 5
"#;

#[test]
fn report_prints_anchor_lines() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(
        &scenario,
        r#"
[layout]
rows = 1000
cols = 1000
dx_lambda0 = 0.5
grid = "rectangular"
"#,
    );
    let out = lcris(&[
        "report",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("power_total: 21.5 mW"), "{stdout}");
    assert!(stdout.contains("line_fom: 80.0 deg/dB"), "{stdout}");
    assert!(stdout.contains("response_tau_on: 15 ms"), "{stdout}");
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn missing_layout_block_exits_2_naming_layout() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(&scenario, "output_dir = \"x\"\n");
    let out = lcris(&["report", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("layout"), "{stderr}");
    // Validation failed before any computation: no output files.
    assert!(!dir.path().join("report.txt").exists());
}

#[test]
fn steer_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(&scenario, SMALL_SCENARIO);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = lcris(&[
            "steer",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in [
        "steer_farfield.csv",
        "steer_grid.bin",
        "steer_spectrum.csv",
        "steer_profile.csv",
        "steer_summary.txt",
    ] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    let summary = fs::read_to_string(out_a.join("steer_summary.txt")).unwrap();
    assert!(summary.contains("bw_tracked_frac"), "{summary}");
    assert!(summary.contains("squint_predicted"), "{summary}");
}

#[test]
fn sweep_writes_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(&scenario, SMALL_SCENARIO);
    let out = lcris(&[
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let patterns = fs::read_to_string(dir.path().join("sweep_patterns.csv")).unwrap();
    assert!(patterns.starts_with("target_deg,theta_deg,mag_db"));
    // Default sweep covers -60..60 in 15-deg steps: 9 targets.
    let summary = fs::read_to_string(dir.path().join("sweep_summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 9, "{summary}");
}

#[test]
fn tolerance_mc_zero_sigma_trials_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(
        &scenario,
        &SMALL_SCENARIO.replace("sigma_m = 0.3e-6", "sigma_m = 0.0"),
    );
    let out = lcris(&[
        "tolerance-mc",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--trials",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("tolerance_mc.csv")).unwrap();
    let etas: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(etas.len(), 5);
    assert!(etas.iter().all(|&e| e == etas[0]), "{csv}");
}

#[test]
fn optimize_reports_nonnegative_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(&scenario, SMALL_SCENARIO);
    let out = lcris(&[
        "optimize",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("optimize_report.txt")).unwrap();
    let improvement: f64 = report
        .lines()
        .find(|l| l.starts_with("improvement_db:"))
        .and_then(|l| l.split(':').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(improvement >= 0.0, "{report}");
    assert!(dir.path().join("optimize_log.csv").exists());
}

#[test]
fn reduce_identity_traces_and_malformed_row() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.toml");
    write(&scenario, SMALL_SCENARIO);
    let traces = dir.path().join("traces.csv");
    write(
        &traces,
        "freq_hz,s21_ris_db,s21_mp_db\n59e9,-50.0,-50.0\n60e9,-49.0,-49.0\n61e9,-48.0,-48.0\n",
    );
    let out = lcris(&[
        "reduce",
        "--scenario",
        scenario.to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let spectrum = fs::read_to_string(dir.path().join("reduce_spectrum.csv")).unwrap();
    for line in spectrum.lines().skip(1) {
        let eta: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((eta - 1.0).abs() < 1e-12, "{line}");
    }

    let bad = dir.path().join("bad.csv");
    write(
        &bad,
        "freq_hz,s21_ris_db,s21_mp_db\n59e9,-50.0,-50.0\n60e9,not_a_number,-49.0\n",
    );
    let out = lcris(&[
        "reduce",
        "--scenario",
        scenario.to_str().unwrap(),
        "--traces",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("row 3"), "{stderr}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = lcris(&["steer", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
