use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nonholo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(args)
        .current_dir(dir)
        .env_remove("NONHOLO_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn missing_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["simulate", "--config", "missing.cfg", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["simulate", "--set", "chaplygin.I9=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chaplygin_simulation_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("chaplygin.cfg"), "system = chaplygin\n[chaplygin]\nI1 = 2\nI3 = 1\n").unwrap();
    let out = nonholo(&["simulate", "--config", "chaplygin.cfg", "--t-end", "100", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["version"], "1");
    assert!(summary["energy_relative_drift"].as_f64().unwrap() < 1e-8);
    let csv = dir.path().join("run/trajectory.csv");
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,q1,q2,q3,q4,q5,pi1,pi2,pi3,H,p_Z1,M1,M2,M3,gamma1,gamma2,gamma3");
    let t = column(&csv, "t");
    assert!((t.last().unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn homogeneous_ball_first_momentum_is_area_integral() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--set",
        "system=revolution",
        "--set",
        "revolution.profile=sphere",
        "--set",
        "revolution.I1=0.4",
        "--set",
        "revolution.I3=0.4",
        "--t-end",
        "5",
        "--out",
        "ball",
    ];
    let out = nonholo(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("ball/trajectory.csv");
    let p = column(&csv, "p_Z1");
    let m: Vec<Vec<f64>> = ["M1", "M2", "M3"].iter().map(|c| column(&csv, c)).collect();
    let g: Vec<Vec<f64>> = ["gamma1", "gamma2", "gamma3"].iter().map(|c| column(&csv, c)).collect();
    let area0: f64 = (0..3).map(|i| m[i][0] * g[i][0]).sum();
    for v in &p {
        assert!((v - area0).abs() < 1e-10, "{v} vs {area0}");
    }
}

#[test]
fn simulation_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        let out = nonholo(&["simulate", "--t-end", "2", "--out", d], dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a").join("trajectory.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b").join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn energy_drift_limit_names_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["simulate", "--t-end", "2", "--step", "0.2", "--set", "integrator.max_energy_drift=1e-15"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invariant H"));
}

#[test]
fn verify_all_passes_on_bundled_systems() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["verify", "--check", "all", "--n-samples", "30", "--jobs", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["version"], "1");
    assert_eq!(v["all_ok"], true);
    let reports = v["reports"].as_array().unwrap();
    assert!(reports.iter().any(|r| r["system"] == "chaplygin"));
    assert!(reports.iter().any(|r| r["system"].as_str().unwrap().starts_with("revolution")));
}

#[test]
fn intermediate_jacobi_is_expected_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["verify", "--check", "rank2-jacobi", "--system", "chaplygin-intermediate"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["reports"][0];
    assert_eq!(r["pass"], false);
    assert_eq!(r["expected_fail"], true);
}

#[test]
fn homogeneous_jacobi_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["verify", "--check", "rank2-jacobi", "--system", "chaplygin-homogeneous"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["reports"][0];
    assert_eq!(r["pass"], true);
    assert_eq!(r["expected_fail"], false);
}

#[test]
fn zero_lambda_casimir_check_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["verify", "--check", "casimir", "--lambda", "zero", "--system", "chaplygin"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(json(&out)["reports"][0]["max_residual"].as_f64().unwrap() > 1e-2);
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(["verify", "--check", "skew", "--system", "chaplygin", "--n-samples", "5"])
        .current_dir(dir.path())
        .env("NONHOLO_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["reports"][0]["seed"], 1234);
}

#[test]
fn jobs_do_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let args = |j: &'static str| ["verify", "--system", "chaplygin", "--n-samples", "20", "--jobs", j];
    let a = nonholo(&args("1"), dir.path());
    let b = nonholo(&args("3"), dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_check_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["verify", "--check", "nonsense", "--system", "chaplygin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gauge_ode_homogeneous_ball_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "system = revolution\nrevolution.profile = sphere\nrevolution.I1 = 0.4\nrevolution.I3 = 0.4\n";
    std::fs::write(dir.path().join("ball.cfg"), cfg).unwrap();
    let out = nonholo(&["gauge-ode", "--config", "ball.cfg", "--out", "ode"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("ode/gauge_ode.csv");
    for g in column(&csv, "g1") {
        assert!((g - 1.0).abs() < 1e-9);
    }
    for k in column(&csv, "k1") {
        assert!(k.abs() < 1e-9);
    }
    assert_eq!(json(&out)["version"], "1");
}

#[test]
fn gauge_ode_offset_sphere_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(
        &["gauge-ode", "--set", "system=revolution", "--set", "revolution.profile=offset-sphere", "--out", "ode"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["evenness_1", "evenness_2", "periodicity_1", "periodicity_2"] {
        assert!(v[key].as_f64().unwrap() < 1e-6, "{key}");
    }
}

#[test]
fn gauge_ode_rejects_profile_with_pole_kink() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gauge-ode",
        "--set",
        "system=revolution",
        "--set",
        "revolution.profile=polynomial",
        "--set",
        "revolution.f1=1,0.5",
        "--set",
        "revolution.f2=0.1,1",
    ];
    let out = nonholo(&args, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Floquet residuals"));
}

#[test]
fn gauge_ode_needs_revolution() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nonholo(&["gauge-ode"], dir.path()).status.code(), Some(2));
}

#[test]
fn bracket_table_blocks_are_skew() {
    let dir = tempfile::tempdir().unwrap();
    let out = nonholo(&["bracket-table", "--q", "0,1.0,0.4,0,0", "--pi", "0.3,-0.2,0.1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["version"], "1");
    for key in ["pi_nh", "pi_lambda"] {
        let m: Vec<Vec<f64>> = serde_json::from_value(v[key].clone()).unwrap();
        assert_eq!(m.len(), 8);
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v + m[j][i]).abs() < 1e-12);
            }
        }
    }
}
