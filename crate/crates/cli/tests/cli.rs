use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qhplasma(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qhplasma"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QHPLASMA_OUT")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{command}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["meanfield", "--N", "0"][..],
        &["meanfield", "--N", "3", "--k", "-1"],
        &["meanfield", "--N", "3", "--T", "0"],
        &["meanfield", "--N", "3", "--T", "-0.5"],
        &["meanfield", "--N", "3", "--unknown"],
        &["meanfield"],
        &["phase-diagram", "--N", "3"],
        &["ed", "--N", "3", "--l-min", "5", "--l-max", "2"],
        &["energy", "--N", "3", "--omega", "-1"],
    ] {
        let out = qhplasma(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn sample_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sample", "--N", "8", "--sweeps", "400", "--burnin", "100", "--seed", "7"];
    assert!(qhplasma(&args, a.path()).status.success());
    assert!(qhplasma(&args, b.path()).status.success());
    let x = std::fs::read(a.path().join("sample.csv")).unwrap();
    let y = std::fs::read(b.path().join("sample.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(manifest(a.path(), "sample")["config_hash"], manifest(b.path(), "sample")["config_hash"]);

    let c = tempfile::tempdir().unwrap();
    let other = ["sample", "--N", "8", "--sweeps", "400", "--burnin", "100", "--seed", "8"];
    assert!(qhplasma(&other, c.path()).status.success());
    assert_ne!(x, std::fs::read(c.path().join("sample.csv")).unwrap());
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("chain.bin");
    let ck_s = ck.to_str().unwrap();
    let first = ["sample", "--N", "6", "--sweeps", "200", "--burnin", "50", "--checkpoint", ck_s];
    assert!(qhplasma(&first, dir.path()).status.success());
    let resumed = dir.path().join("r");
    let second = ["sample", "--N", "6", "--sweeps", "200", "--resume", ck_s];
    assert!(qhplasma(&second, &resumed).status.success());
    let again = dir.path().join("a");
    assert!(qhplasma(&second, &again).status.success());
    assert_eq!(
        std::fs::read(resumed.join("sample.csv")).unwrap(),
        std::fs::read(again.join("sample.csv")).unwrap()
    );
}

#[test]
fn meanfield_bulk_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = qhplasma(&["meanfield", "--N", "100", "--m", "0"], dir.path());
    assert!(out.status.success());
    let cap = 1.0 / (2.0 * std::f64::consts::PI);
    let bulk: Vec<_> = rows(&dir.path().join("meanfield.csv"))
        .into_iter()
        .filter(|r| r[0] < 0.8)
        .collect();
    assert!(!bulk.is_empty());
    for r in bulk {
        assert!((r[1] / cap - 1.0).abs() < 0.05, "rho({}) = {}", r[0], r[1]);
    }
    let m = manifest(dir.path(), "meanfield");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "meanfield");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[params]\nN = 4\nm = 2\n[ed]\nl_max = 6\n").unwrap();
    let out = qhplasma(&["ed", "--config", cfg.to_str().unwrap(), "--l-min", "3"], dir.path());
    assert!(out.status.success());
    let table = rows(&dir.path().join("ed.csv"));
    assert_eq!(table.first().unwrap()[0], 3.0);
    assert_eq!(table.last().unwrap()[0], 6.0);

    std::fs::write(&cfg, "[params]\nN = 4\nbogus = 1\n").unwrap();
    let out = qhplasma(&["ed", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hash_ignores_irrelevant_settings() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(qhplasma(&["ed", "--N", "3", "--l-max", "4"], a.path()).status.success());
    assert!(qhplasma(&["ed", "--N", "3", "--l-max", "4", "--seed", "99"], b.path()).status.success());
    assert_eq!(manifest(a.path(), "ed")["config_hash"], manifest(b.path(), "ed")["config_hash"]);
    let c = tempfile::tempdir().unwrap();
    assert!(qhplasma(&["ed", "--N", "3", "--l-max", "5"], c.path()).status.success());
    assert_ne!(manifest(a.path(), "ed")["config_hash"], manifest(c.path(), "ed")["config_hash"]);
}

#[test]
fn phase_diagram_boundaries_are_resolved() {
    let dir = tempfile::tempdir().unwrap();
    let out = qhplasma(&["phase-diagram", "--N", "10", "--k", "0.001", "--points", "41"], dir.path());
    assert!(out.status.success());
    let d = &manifest(dir.path(), "phase-diagram")["diagnostics"];
    assert_eq!(d["vortex_boundary_within_step"], true);
    assert_eq!(d["thermal_boundary_within_step"], true);
    let table = rows(&dir.path().join("phase_diagram.csv"));
    assert_eq!(table.len(), 41);
    assert!(table.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn energy_rows_respect_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = qhplasma(
        &[
            "energy", "--N", "12", "--k", "0.001", "--omega", "-0.03", "--m-values", "0,12,24",
            "--mc", "--sweeps", "4000",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    for r in rows(&dir.path().join("energy.csv")) {
        // lower_bound <= mc_term + 3 stderr
        assert!(r[9] <= r[6] + 3.0 * r[7], "{r:?}");
    }
}
