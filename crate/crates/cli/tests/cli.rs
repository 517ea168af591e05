use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qbattery(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbattery"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = qbattery(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn header(csv: &str) -> &str {
    csv.lines().next().unwrap()
}

#[test]
fn heat_budget_shared_limit() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(&["heat-budget", "--arch", "shared"], dir.path())).unwrap();
    assert_eq!(v["qubit_limit"], 808);
    assert_eq!(v["architecture"], "shared_cavity");
}

#[test]
fn evolve_x_gate_reaches_excited_state() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"n_qubits": 1, "g": 1.0, "n_fb": 4}"#).unwrap();
    let t = std::f64::consts::PI / 4.0;
    fs::write(
        dir.path().join("x.json"),
        format!(r#"{{"segments": [{{"duration": {t}, "delta": [0.0]}}]}}"#),
    )
    .unwrap();
    let out = ok(&["evolve", "--system", "s.json", "--schedule", "x.json"], dir.path());
    let v: Value = serde_json::from_str(&out).unwrap();
    let p1 = v["populations"][1].as_f64().unwrap();
    assert!(1.0 - p1 < 1e-12, "population {p1}");
}

#[test]
fn csv_schemas_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = ok(&["charge-sweep", "--n-max", "2", "--r-max", "2"], dir.path());
    assert_eq!(
        header(&sweep),
        "n_qubits,r,n_fb,battery,normalized_time,time,gate_error"
    );
    assert_eq!(sweep.lines().count(), 1 + 8);
    let curve = ok(&["energy-curve", "--depth", "2"], dir.path());
    assert_eq!(header(&curve), "depth,architecture,energy_j");
    assert_eq!(curve.lines().count(), 1 + 4 * 3);
    let heat = ok(&["heat-budget", "--format", "csv"], dir.path());
    assert_eq!(
        header(&heat),
        "architecture,passive_cp_w,passive_mxc_w,active_cp_w,active_mxc_w,total_cp_w,total_mxc_w,qubit_limit_cp,qubit_limit_mxc,qubit_limit"
    );
    let state = {
        fs::write(dir.path().join("s.json"), r#"{"n_qubits": 2, "g": 1.0, "n_fb": 2}"#).unwrap();
        fs::write(dir.path().join("e.json"), r#"{"segments": [{"duration": 0.5, "delta": [1.0, -1.0]}]}"#).unwrap();
        ok(
            &["evolve", "--system", "s.json", "--schedule", "e.json", "--format", "csv"],
            dir.path(),
        )
    };
    assert_eq!(header(&state), "index,re,im,population");
}

#[test]
fn single_qubit_sweep_row_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let rows = ok(
        &["charge-sweep", "--n-max", "1", "--r-min", "3", "--r-max", "3", "--battery", "fock"],
        dir.path(),
    );
    let fields: Vec<&str> = rows.lines().nth(1).unwrap().split(',').collect();
    assert!((fields[4].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    assert!(fields[6].parse::<f64>().unwrap() < 1e-12);
}

#[test]
fn seeded_search_is_deterministic_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.json"),
        r#"{"seed_starts": 32, "refine": 2, "solver": {"starts": 4, "max_evals": 400}}"#,
    )
    .unwrap();
    let args = |out: &'static str| {
        [
            "local-gate-search", "--qubits", "2", "--nfb", "3", "--seed", "5",
            "--config", "small.json", "--out", out,
        ]
    };
    ok(&args("a.json"), dir.path());
    ok(&args("b.json"), dir.path());
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["schema"], "local_gate.v1");
    assert_eq!(manifest["settings"]["seed_starts"], 32);

    ok(&["rerun", "a.json.manifest.json", "--out", "c.json"], dir.path());
    assert_eq!(a, fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn validation_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["heat-budget", "--arch", "nowhere"],
        vec!["local-gate-search", "--qubits", "3", "--nfb", "2"],
        vec!["charge-sweep", "--n-min", "3", "--n-max", "2"],
        vec!["energy-curve", "--depth", "-1"],
        vec!["local-gate-search", "--qubits", "2", "--nfb", "2", "--format", "csv"],
        vec!["heat-budget", "--config", "missing.json"],
    ] {
        let out = qbattery(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}
