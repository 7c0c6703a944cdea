use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_impact-kam");

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{sub}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}-{}", extra.join("-")));
    let output = Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

/// Data rows of a CSV, skipping the stamp line and the header.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# impact-kam "));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().nth(1).unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SIM_E0: &str = "[model]\nepsilon = 0.0\n\n[simulate]\ny0 = 3.0\nn_impacts = 10\n";

#[test]
fn simulate_unperturbed_orbit() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "simulate", SIM_E0, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = out.join("orbit.csv");
    assert_eq!(header(&csv), "impact_index,t,t_mod_2pi,y,E");
    let r = rows(&csv);
    assert_eq!(r.len(), 11);
    for (i, row) in r.iter().enumerate() {
        let t: f64 = row[1].parse().unwrap();
        assert_eq!(row[3], "3");
        assert!((t - 12.0 * i as f64).abs() < 1e-9);
        assert_eq!(row[4], "-4.5");
    }
    let meta = json(&out.join("simulate.meta.json"));
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nepsilon = 0.01\n\n[simulate]\ny0 = 8.0\nn_impacts = 300\n";
    let (_, a) = run(dir.path(), "simulate", cfg, &[]);
    let (_, b) = run(dir.path(), "simulate", cfg, &["--workers", "1"]);
    for f in ["orbit.csv", "simulate.meta.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn schema_violation_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nepsilon = 0.01\n\n[simulate]\ny0 = 3.0\nn_impacts = -10\n";
    let (o, out) = run(dir.path(), "simulate", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 6"), "{err}");
    assert!(!out.exists());

    let (o, _) = run(dir.path(), "audit", "[model]\nepsilon = 0.01\nstray = 1\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn missing_config_is_a_config_error() {
    let o = Command::new(BIN).arg("audit").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn impact_map_table() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nepsilon = 0.01\n\n[impact_map]\ny_values = [6.0, 12.0]\nt_points = 8\n";
    let (o, out) = run(dir.path(), "impact-map", cfg, &[]);
    assert!(o.status.success());
    let r = rows(&out.join("impact_map.csv"));
    assert_eq!(r.len(), 16);
    for row in &r {
        let v: Vec<f64> = row.iter().map(|x| x.parse().unwrap()).collect();
        // t̄ = t₀ + α + ε f_t with α = 4y₀.
        assert!((v[2] - (v[0] + v[4] + 0.01 * v[5])).abs() < 1e-9);
        assert!((v[4] - 4.0 * v[1]).abs() < 1e-12);
    }
}

#[test]
fn find_curve_unperturbed_and_perturbed() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "find-curve", "[model]\nepsilon = 0.0\n\n[find_curve]\nk = 4\n", &[]);
    assert!(o.status.success());
    let rep = json(&out.join("kam_report.json"));
    assert_eq!(rep["report"]["iterations"], 1);
    assert_eq!(rep["report"]["verdict"], "converged");

    let cfg = "[model]\nepsilon = 0.01\n\n[find_curve]\nk = 4\n";
    let (o, out) = run(dir.path(), "find-curve", cfg, &["--seed", "5"]);
    assert!(o.status.success());
    let rep = json(&out.join("kam_report.json"));
    assert_eq!(rep["report"]["verdict"], "converged");
    assert_eq!(rep["report"]["quadratic_decay"], true);
    assert!(rep["report"]["final_error"].as_f64().unwrap() < 1e-11);
    assert_eq!(header(&out.join("curve.csv")), "theta,phi_phi,phi_I,t0,y0");
    assert_eq!(rows(&out.join("curve.csv")).len(), 256);
    let iters = rows(&out.join("kam_iterations.csv"));
    assert_eq!(iters.len(), rep["report"]["iterations"].as_u64().unwrap() as usize);
    assert_eq!(json(&out.join("find-curve.meta.json"))["seed"], 5);
}

#[test]
fn near_rational_frequency_fails_with_record() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nepsilon = 0.01\n\n[find_curve]\nk = 4\nomega = 28.274333882308138\n";
    let (o, out) = run(dir.path(), "find-curve", cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    let f = json(&out.join("failure.json"));
    assert_eq!(f["details"]["small_divisor"]["k"], 2);
    assert_eq!(f["details"]["report"]["verdict"], "small_divisor_fail");
    assert!(!out.join("curve.csv").exists());
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nepsilon = 0.01\n\n[ladder]\nk_min = 2\nk_max = 6\n\n[kam]\norder = 32\n";
    let (o1, a) = run(dir.path(), "sweep-ladder", cfg, &["--workers", "1"]);
    let (o2, b) = run(dir.path(), "sweep-ladder", cfg, &["--workers", "3"]);
    assert!(o1.status.success() && o2.status.success());
    let csv = a.join("ladder.csv");
    assert_eq!(fs::read(&csv).unwrap(), fs::read(b.join("ladder.csv")).unwrap());
    let r = rows(&csv);
    assert_eq!(r.iter().map(|x| x[0].as_str()).collect::<Vec<_>>(), ["3", "4", "5", "6"]);
    assert!(r.iter().all(|x| x[6] == "converged"));
    let filtered = json(&a.join("ladder_filtered.json"));
    assert_eq!(filtered["filtered"][0]["k"], 2);
}

#[test]
fn audit_tables() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "audit", "[model]\nepsilon = 0.0\n", &[]);
    assert!(o.status.success());
    let r = rows(&out.join("audit.csv"));
    assert_eq!(header(&out.join("audit.csv")), "check,measured,threshold,status");
    for row in &r {
        assert_ne!(row[3], "fail", "{row:?}");
        if row[1] != "NaN" {
            assert_eq!(row[1].parse::<f64>().unwrap(), 0.0, "{row:?}");
        }
    }
    let (o, out) = run(dir.path(), "audit", "[model]\nepsilon = 0.01\n", &[]);
    assert!(o.status.success());
    let r = rows(&out.join("audit.csv"));
    assert!(r.iter().all(|row| row[3] != "fail"), "{r:?}");
    assert!(r.iter().filter(|row| row[3] == "pass").count() >= 5);
}

#[test]
fn certify_negative_control_reports_breach() {
    let dir = TempDir::new().unwrap();
    let cfg = "seed = 7\n\n[model]\nepsilon = 0.05\n\n[certify]\ninner_k = 4\nouter_k = 5\nn_trials = 64\nn_impacts = 100000\ncontrol = true\n";
    let (o, out) = run(dir.path(), "certify", cfg, &[]);
    assert!(o.status.success());
    let s = json(&out.join("confinement.json"));
    assert!(s["breaches"].as_u64().unwrap() >= 1);
    assert_eq!(rows(&out.join("confinement.csv")).len(), 64);
}
