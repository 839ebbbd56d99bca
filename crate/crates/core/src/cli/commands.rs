use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::report::{BoundsReport, Check, LadderPoint, RunReport, SimulationSummary};
use super::scenario::{benchmark, Controller, ScenarioFile, SCHEMA_VERSION};
use super::CliError;
use crate::analysis::{
    bounds_decentralized, bounds_distributed, certify_stability, equilibrium, equilibrium_state,
    tail_drift, tail_margins, verify_objective, AnalysisError, BoundSet, EquilibriumReport,
};
use crate::plant::{ControllerConfig, Plant};
use crate::sim::{integrate, sweep, Scenario, SimMode, SweepOutcome, SweepParam, Trajectory};

/// Slack per stored step when checking that `W` does not increase.
const LYAPUNOV_SLACK: f64 = 1e-9;
const EQUILIBRIUM_RESIDUAL: f64 = 1e-9;
const TAIL_MATCH: f64 = 1e-6;
const GAMMA_LADDER: [f64; 3] = [1e-2, 1e-4, 1e-6];

const NOTE_ENERGY: &str =
    "energy function weights DC voltages with the terminal capacitances (V_nom/2 * V^T C V)";
const NOTE_BOUNDS_ABS: &str = "error bounds use max_i |P^m_i| in all three formulas";
const NOTE_PROJECTED_WEIGHT: &str =
    "averaged-integrator energy term is (n/2) eta'^2, which cancels the frequency cross terms";

pub fn load_scenario(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFile::parse(&text)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `P^m` after every event of the scenario.
fn final_disturbance(scn: &Scenario) -> Vec<f64> {
    let mut p_m = scn.plant.params.p_m.clone();
    for e in &scn.events {
        p_m[e.area] += e.dp_m;
    }
    p_m
}

fn plant_with(scn: &Scenario, p_m: &[f64]) -> Plant {
    let mut plant = scn.plant.clone();
    plant.params.p_m = p_m.to_vec();
    plant
}

fn matching_bounds(report: &BoundsReport, config: ControllerConfig) -> Option<&BoundSet> {
    if config == ControllerConfig::DroopOnly {
        report.decentralized.as_ref()
    } else {
        report.distributed.as_ref()
    }
}

fn gamma_ladder(scn: &Scenario) -> Result<Vec<LadderPoint>, CliError> {
    let n = scn.plant.n();
    sweep(scn, SweepParam::Gamma, &GAMMA_LADDER)?
        .into_iter()
        .map(|entry| {
            let eq = entry.result?.equilibrium;
            let eta = &eq.x0[2 * n..];
            Ok(LadderPoint {
                gamma: entry.value,
                eta_avg: eta.iter().sum::<f64>() / eta.len() as f64,
                omega_hat_sum: eq.omega_hat_avg * n as f64,
                v_hat_sum: eq.v_hat_avg * n as f64,
            })
        })
        .collect()
}

fn analyze_resolved(file: &ScenarioFile, scn: &Scenario) -> Result<RunReport, CliError> {
    let p_m = final_disturbance(scn);
    let plant = plant_with(scn, &p_m);
    let sys = plant.assemble();
    let stability = certify_stability(&sys);
    let mut notes = vec![NOTE_ENERGY.to_string(), NOTE_BOUNDS_ABS.to_string()];
    if plant.config == ControllerConfig::SecondaryProjected {
        notes.push(NOTE_PROJECTED_WEIGHT.to_string());
    }
    if scn.mode == SimMode::RlLines {
        notes.push("equilibrium and bounds use the resistive line model, whose steady state the RL model shares".into());
    }

    let (equilibrium, gamma_ladder) = match equilibrium(&sys) {
        Ok(r) => (Some(r), Vec::new()),
        Err(AnalysisError::SingularSystem { .. }) => {
            notes.push(
                "closed-loop matrix singular (gamma = 0): no unique equilibrium; evaluated the gamma ladder instead"
                    .into(),
            );
            (None, gamma_ladder(scn)?)
        }
        Err(e) => return Err(e.into()),
    };

    let bounds = match (
        bounds_decentralized(&plant.params, &plant.gains, &plant.dc),
        bounds_distributed(&plant.params, &plant.gains, &plant.dc),
    ) {
        (Ok(dec), Ok(dist)) => BoundsReport {
            decentralized: Some(dec),
            distributed: Some(dist),
            unavailable: None,
        },
        (Err(AnalysisError::NonUniformGains), _) | (_, Err(AnalysisError::NonUniformGains)) => BoundsReport {
            decentralized: None,
            distributed: None,
            unavailable: Some(
                "bounds unavailable: they require identical k_omega, k_v and k_droop in every area".into(),
            ),
        },
        (Err(e), _) | (_, Err(e)) => return Err(e.into()),
    };

    Ok(RunReport {
        schema: SCHEMA_VERSION,
        scenario: file.clone(),
        disturbance: p_m,
        stability,
        equilibrium,
        gamma_ladder,
        bounds,
        simulation: None,
        checks: Vec::new(),
        notes,
    })
}

/// Certificates, equilibrium and bounds without time integration.
pub fn cmd_analyze(file: &ScenarioFile) -> Result<RunReport, CliError> {
    let scn = file.resolve()?;
    analyze_resolved(file, &scn)
}

fn summarize(traj: &Trajectory, report: &RunReport, scn: &Scenario) -> Result<SimulationSummary, CliError> {
    let last = traj.last();
    let drift = tail_drift(traj)?;
    let (verdict, verdict_note) = match matching_bounds(&report.bounds, scn.plant.config) {
        Some(bounds) => match verify_objective(traj, bounds, &scn.plant.params) {
            Ok(v) => (Some(v), None),
            Err(e @ AnalysisError::NotConverged { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        },
        None => (None, report.bounds.unavailable.clone()),
    };
    Ok(SimulationSummary {
        samples: traj.len(),
        substeps: traj.plan.substeps,
        step: traj.plan.h,
        rho: traj.plan.rho,
        step_warning: traj.step_warning(),
        tail_drift: drift,
        final_omega: traj.omega(last).to_vec(),
        final_v: traj.v(last).to_vec(),
        final_p_gen: traj.p_gen(last).to_vec(),
        verdict,
        verdict_note,
    })
}

fn run(file: &ScenarioFile) -> Result<(Scenario, RunReport, Trajectory), CliError> {
    let scn = file.resolve()?;
    let mut report = analyze_resolved(file, &scn)?;
    let traj = integrate(&scn)?;
    if scn.mode == SimMode::NonlinearPowerCurrent {
        report
            .notes
            .push("lyap_w of the nonlinear run is measured against the linearized equilibrium".into());
    }
    report.simulation = Some(summarize(&traj, &report, &scn)?);
    Ok((scn, report, traj))
}

/// Integrates the scenario and writes the trajectory CSV to `out`.
pub fn cmd_simulate(file: &ScenarioFile, out: &Path) -> Result<RunReport, CliError> {
    let (_, report, traj) = run(file)?;
    write_csv(out, &traj)?;
    Ok(report)
}

/// Writes `t, omega_1..n, v_1..n, pgen_1..n, lyap_w` with 12 significant digits.
pub fn write_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let n = traj.n;
    let mut header = vec!["t".to_string()];
    for prefix in ["omega", "v", "pgen"] {
        header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    header.push("lyap_w".into());
    w.write_record(&header).map_err(io_err)?;
    let mut row: Vec<String> = Vec::with_capacity(3 * n + 2);
    for k in 0..traj.len() {
        row.clear();
        row.push(format!("{:.11e}", traj.times[k]));
        for v in traj.omega(k).iter().chain(traj.v(k)).chain(traj.p_gen(k)) {
            row.push(format!("{v:.11e}"));
        }
        row.push(format!("{:.11e}", traj.w[k]));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the four benchmark scenarios into `dir`.
pub fn cmd_bench(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Controller::ALL
        .into_iter()
        .map(|c| {
            let path = dir.join(format!("bench-{}.json", c.name()));
            write_file(&path, &(benchmark(c).to_json() + "\n"))?;
            Ok(path)
        })
        .collect()
}

fn check(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail: detail.into(),
    }
}

fn zero_average_checks(scn: &Scenario, p_m: &[f64], checks: &mut Vec<Check>) -> Result<(), CliError> {
    let g = &scn.plant.gains;
    let p_inf = p_m.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let n = scn.plant.n() as f64;
    match scn.plant.config {
        ControllerConfig::SecondaryDistributed => {
            let ladder = [g.delta, 10.0 * g.delta, 100.0 * g.delta];
            let mut scale: f64 = 0.0;
            let mut sums = Vec::with_capacity(ladder.len());
            for entry in sweep(scn, SweepParam::Delta, &ladder)? {
                let eq = entry.result?.equilibrium;
                scale = scale.max(eq.x0.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                sums.push((eq.omega_hat_avg.abs() * n, eq.v_hat_avg.abs() * n));
            }
            // rounding-level slack: with a uniform integral gain both sums vanish for every delta
            let slack = 1e-9 * n * scale;
            let monotone = sums.windows(2).all(|w| w[1].0 <= w[0].0 + slack && w[1].1 <= w[0].1 + slack);
            let last = sums[2];
            let small = last.0 <= 1e-3 * p_inf && last.1 <= 1e-3 * p_inf;
            checks.push(check(
                "zero_average",
                monotone && small,
                format!("|1'w|, |1'V| over delta {ladder:?}: {sums:?}"),
            ));
        }
        ControllerConfig::SecondaryProjected if g.gamma <= 1e-8 * g.k_droop_i.iter().cloned().fold(f64::INFINITY, f64::min) => {
            let plant = plant_with(scn, p_m);
            let eq = equilibrium(&plant.assemble())?;
            let (w, v) = (eq.omega_hat_avg.abs() * n, eq.v_hat_avg.abs() * n);
            checks.push(check(
                "zero_average",
                w <= 1e-6 * p_inf && v <= 1e-6 * p_inf,
                format!("|1'w| = {w:.3e}, |1'V| = {v:.3e}"),
            ));
        }
        _ => {}
    }
    Ok(())
}

/// Simulates, then checks every property that applies to the scenario.
///
/// The returned report lists all checks; [`RunReport::first_failure`] names
/// the first failing one.
pub fn cmd_verify(file: &ScenarioFile) -> Result<RunReport, CliError> {
    let (scn, mut report, traj) = run(file)?;
    let p_m = final_disturbance(&scn);
    let plant = plant_with(&scn, &p_m);
    let n = plant.n();
    let mut checks = Vec::new();

    let cert = &report.stability;
    checks.push(check("q1_positive_definite", cert.q1_pd, "Q1 Cholesky and Schur complement"));
    let marginal = plant.config == ControllerConfig::SecondaryComplete && plant.gains.gamma == 0.0;
    if marginal {
        checks.push(check("lasalle_marginal", cert.q1_pd, cert.method_notes.clone()));
    } else {
        checks.push(check("hurwitz", cert.hurwitz, cert.method_notes.clone()));
    }
    if let Some(eq) = &report.equilibrium {
        checks.push(check(
            "equilibrium_residual",
            eq.residual <= EQUILIBRIUM_RESIDUAL,
            format!("|A x0 + b|_inf = {:.3e}", eq.residual),
        ));
    }

    if scn.mode != SimMode::NonlinearPowerCurrent {
        let start = scn
            .events
            .last()
            .and_then(|e| traj.index_at(e.t))
            .unwrap_or(0);
        let worst = (start..traj.last())
            .map(|k| traj.w[k + 1] - traj.w[k])
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(check(
            "lyapunov_monotone",
            worst <= LYAPUNOV_SLACK,
            format!("largest per-step increase of W after the last event: {worst:.3e}"),
        ));
    }

    let summary = report.simulation.as_ref().expect("run() fills the summary");
    checks.push(check(
        "tail_converged",
        summary.tail_drift < crate::analysis::CONVERGENCE_DRIFT,
        format!("tail drift {:.3e}", summary.tail_drift),
    ));

    let x_eq = equilibrium_state(&plant, &p_m)?;
    let x_end = traj.state(traj.last());
    let gap = x_end[..2 * n]
        .iter()
        .zip(&x_eq[..2 * n])
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    checks.push(check(
        "tail_matches_equilibrium",
        gap <= TAIL_MATCH,
        format!("|x(t_end) - x0|_inf over frequencies and voltages = {gap:.3e}"),
    ));

    match matching_bounds(&report.bounds, plant.config) {
        Some(bounds) => {
            let v = tail_margins(&traj, bounds, &plant.params)?;
            checks.push(check(
                "bound_dominance",
                v.pass,
                format!(
                    "{:?} bounds over the last 10% of samples, worst margin {:.3e}",
                    v.variant,
                    worst_margin(&v)
                ),
            ));
        }
        None => checks.push(check(
            "bound_dominance",
            false,
            report.bounds.unavailable.clone().unwrap_or_default(),
        )),
    }

    zero_average_checks(&scn, &p_m, &mut checks)?;
    report.checks = checks;
    Ok(report)
}

fn worst_margin(v: &crate::analysis::ObjectiveVerdict) -> f64 {
    v.areas
        .iter()
        .flat_map(|a| [a.gen_margin, a.v_margin, a.omega_margin])
        .fold(f64::INFINITY, f64::min)
}

impl RunReport {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub value: f64,
    pub equilibrium: Option<EquilibriumReport>,
    pub bounds: Option<BoundSet>,
    pub within_bounds: Option<bool>,
    pub error: Option<String>,
}

/// Post-event equilibria over a parameter ladder.
pub fn cmd_sweep(file: &ScenarioFile, param: &str, values: &[f64]) -> Result<Vec<SweepRecord>, CliError> {
    let param = SweepParam::parse(param).ok_or_else(|| {
        CliError::Invalid(format!(
            "--param: unknown parameter `{param}` (expected delta, gamma, k_droop, k_droop_i, k_omega or k_v)"
        ))
    })?;
    let scn = file.resolve()?;
    Ok(sweep(&scn, param, values)?
        .into_iter()
        .map(|e| match e.result {
            Ok(SweepOutcome {
                equilibrium,
                bounds,
                within_bounds,
            }) => SweepRecord {
                value: e.value,
                equilibrium: Some(equilibrium),
                bounds,
                within_bounds,
                error: None,
            },
            Err(err) => SweepRecord {
                value: e.value,
                equilibrium: None,
                bounds: None,
                within_bounds: None,
                error: Some(err.to_string()),
            },
        })
        .collect())
}
