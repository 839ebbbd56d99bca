use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtdc::cli::{benchmark, Controller, ScenarioFile};
use mtdc::sim::SimMode;
use serde_json::Value;

fn mtdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtdc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, file: &ScenarioFile) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, file.to_json()).unwrap();
    path
}

fn short(controller: Controller, t_end: f64) -> ScenarioFile {
    let mut file = benchmark(controller);
    file.sim.t_end = t_end;
    file
}

#[test]
fn bench_writes_four_resolvable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = mtdc(&["bench", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let listed: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(listed.len(), 4);
    for path in listed {
        let file = ScenarioFile::parse(&fs::read_to_string(&path).unwrap()).unwrap();
        file.resolve().unwrap();
    }
}

#[test]
fn analyze_reports_equilibrium_and_bounds() {
    let out = mtdc(&["analyze", "--bench", "--controller", "droop"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stability"]["hurwitz"], Value::Bool(true));
    assert!(report["equilibrium"]["residual"].as_f64().unwrap() < 1e-9);
    let gap = report["bounds"]["decentralized"]["delta_e_omega"].as_f64().unwrap();
    assert!((gap - 0.2 / 48.0).abs() < 1e-15);
}

#[test]
fn singular_complete_controller_gets_gamma_ladder() {
    let out = mtdc(&["analyze", "--bench", "--controller", "secondary-complete"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["equilibrium"].is_null());
    let ladder = report["gamma_ladder"].as_array().unwrap();
    assert_eq!(ladder.len(), 3);
    let eta = ladder[2]["eta_avg"].as_f64().unwrap();
    // steady-state power balance: n k_V k_I / k_w * eta' = sum P^m
    let expected = 9000.0 / (6.0 * 110.0 * 10.0) * -0.2;
    assert!((eta - expected).abs() < 1e-3 * expected.abs(), "{eta}");
}

#[test]
fn simulate_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(dir.path(), "s.json", &short(Controller::SecondaryDistributed, 1.5));
    let csv_path = dir.path().join("traj.csv");
    let out = mtdc(&["simulate", scn.to_str().unwrap(), "--out", csv_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.len(), 1 + 3 * 6 + 1);
    assert_eq!(header[0], "t");
    assert_eq!(header[1], "omega_1");
    assert_eq!(header[7], "v_1");
    assert_eq!(header[13], "pgen_1");
    assert_eq!(header[19], "lyap_w");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15001);
    let last_t: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((last_t - 1.5).abs() < 1e-9);

    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("traj.json")).unwrap()).unwrap();
    assert_eq!(report["simulation"]["samples"].as_u64(), Some(15001));
}

#[test]
fn simulation_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = short(Controller::SecondaryDistributed, 1.2);
    file.sim.mode = SimMode::NonlinearPowerCurrent;
    let scn = write_scenario(dir.path(), "s.json", &file);
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = mtdc(&["simulate", scn.to_str().unwrap(), "--out", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push(fs::read(path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let droop = write_scenario(dir.path(), "droop.json", &short(Controller::Droop, 6.0));
    let out = mtdc(&["verify", droop.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == Value::Bool(true)));

    // the secondary loop has not settled 5 s after the fault
    let dist = write_scenario(dir.path(), "dist.json", &short(Controller::SecondaryDistributed, 6.0));
    let out = mtdc(&["verify", dist.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("tail_converged"), "{}", stderr(&out));
}

#[test]
fn invalid_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"schema\": 1,\n  \"grid\": [\n").unwrap();
    let out = mtdc(&["analyze", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));

    let mut file = benchmark(Controller::Droop);
    file.grid.lines[3].r = -1.0;
    let bad = write_scenario(dir.path(), "bad.json", &file);
    let out = mtdc(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("grid.lines[3].r"), "{}", stderr(&out));

    let text = benchmark(Controller::Droop).to_json().replacen("\"gains\": {", "\"gains\": {\n\"k_typo\": 1,", 1);
    let typo = dir.path().join("typo.json");
    fs::write(&typo, text).unwrap();
    assert_eq!(code(&mtdc(&["analyze", typo.to_str().unwrap()])), 2);

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&mtdc(&["analyze", missing.to_str().unwrap()])), 2);
    assert_eq!(code(&mtdc(&["analyze", "--bench", "--controller", "pid"])), 2);
    assert_eq!(code(&mtdc(&["analyze"])), 2);
    assert_eq!(code(&mtdc(&["sweep", "--bench", "--param", "zeta", "--values", "1"])), 2);
}

#[test]
fn forced_coarse_step_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = short(Controller::Droop, 2.0);
    file.sim.dt = 1e-2;
    file.sim.substeps = Some(1);
    let scn = write_scenario(dir.path(), "coarse.json", &file);
    let csv_path = dir.path().join("out.csv");
    let out = mtdc(&["simulate", scn.to_str().unwrap(), "--out", csv_path.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn sweep_keeps_per_value_failures() {
    let out = mtdc(&[
        "sweep",
        "--bench",
        "--controller",
        "secondary-distributed",
        "--param",
        "delta",
        "--values",
        "5,-1,500",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records: Value = serde_json::from_slice(&out.stdout).unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 3);
    assert!(records[0]["error"].is_null() && records[2]["error"].is_null());
    assert!(records[1]["error"].is_string());
    assert_eq!(records[2]["within_bounds"], Value::Bool(true));
}
