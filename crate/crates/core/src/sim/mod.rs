//! Fixed-step RK4 time integration of the closed loops.
//!
//! `dt` is the output sample spacing. Each sample is covered by `substeps`
//! RK4 steps of length `h = dt/substeps`, chosen so that `h·ρ̂ ≤ 0.1` for a
//! norm estimate `ρ̂` of the (balanced) system matrix. Linear models are
//! advanced with the exact affine map of those substeps, so the cost per
//! sample does not depend on stiffness; the nonlinear plant is stepped
//! directly. Disturbance events switch the forcing at the first sample at or
//! after their time stamp.

mod propagator;
mod rl;
mod sweep;

pub use propagator::{plan_steps, rk4_step, AffineMap, Rk4Scratch, StepPlan, STEP_NORM_LIMIT};
pub use rl::{assemble_rl, lumped_capacitance, passive_network, LineRl, RlSystem};
pub use sweep::{sweep, SweepEntry, SweepOutcome, SweepParam};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{equilibrium, equilibrium_state, lyapunov_weight, quadratic_value, AnalysisError};
use crate::densela::Matrix;
use crate::plant::{Plant, PlantError, PlantState, PowerCurrentMode};

/// State magnitude treated as numerical blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("step size unstable: state magnitude {magnitude:.3e} at t = {t} s (h*rho = {h_rho:.3})")]
    StepSizeUnstable { t: f64, magnitude: f64, h_rho: f64 },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// The assembled linear closed loop.
    Linear,
    /// The plant equations with `I^inj = P^inj / V`.
    NonlinearPowerCurrent,
    /// The linear closed loop with inductive DC lines.
    RlLines,
}

/// Step change of `P^m` in one area (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub area: usize,
    pub dp_m: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: Plant,
    /// Initial state in deviation coordinates; the origin when `None`.
    pub initial: Option<Vec<f64>>,
    pub events: Vec<Event>,
    pub t_end: f64,
    pub dt: f64,
    pub mode: SimMode,
    /// Forces the RK4 substep count per sample.
    pub substeps: Option<usize>,
    /// Store every `record_every`-th sample.
    pub record_every: usize,
    /// Per-line inductance/capacitance, in the order of `plant.dc.edges()`.
    pub lines: Vec<LineRl>,
}

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_T_END: f64 = 35.0;

impl Scenario {
    /// A linear-mode scenario with default step and horizon and no events.
    pub fn new(plant: Plant) -> Self {
        Self {
            plant,
            initial: None,
            events: Vec::new(),
            t_end: DEFAULT_T_END,
            dt: DEFAULT_DT,
            mode: SimMode::Linear,
            substeps: None,
            record_every: 1,
            lines: Vec::new(),
        }
    }

    pub fn with_events(mut self, events: Vec<Event>) -> Self {
        self.events = events;
        self
    }

    pub fn with_horizon(mut self, t_end: f64, dt: f64) -> Self {
        self.t_end = t_end;
        self.dt = dt;
        self
    }

    pub fn with_mode(mut self, mode: SimMode) -> Self {
        self.mode = mode;
        self
    }

    /// Number of sample intervals.
    pub fn samples(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        let steps = self.samples();
        if ((steps as f64) * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return bad(format!("t_end {} is not a multiple of dt {}", self.t_end, self.dt));
        }
        if self.record_every == 0 || !steps.is_multiple_of(self.record_every) {
            return bad(format!(
                "record_every must divide the {steps} sample intervals, got {}",
                self.record_every
            ));
        }
        if self.substeps == Some(0) {
            return bad("substeps must be >= 1".into());
        }
        let n = self.plant.n();
        for w in self.events.windows(2) {
            if w[1].t < w[0].t {
                return bad("events must be sorted by time".into());
            }
        }
        for e in &self.events {
            if !(e.t >= 0.0 && e.t.is_finite() && e.dp_m.is_finite()) {
                return bad(format!("event at t = {} is not finite and nonnegative", e.t));
            }
            if e.t > self.t_end {
                return bad(format!("event at t = {} lies after t_end = {}", e.t, self.t_end));
            }
            if e.area >= n {
                return bad(format!("event area {} out of range 1..={n}", e.area + 1));
            }
        }
        if let Some(x0) = &self.initial {
            let dim = self.state_dim();
            if x0.len() != dim || x0.iter().any(|v| !v.is_finite()) {
                return bad(format!("initial state needs {dim} finite entries, got {}", x0.len()));
            }
        }
        Ok(())
    }

    fn state_dim(&self) -> usize {
        let base = self.plant.layout().dim();
        match self.mode {
            SimMode::RlLines => base + self.plant.dc.edges().len(),
            _ => base,
        }
    }
}

/// Stored samples of one run.
///
/// Frequencies and voltages are absolute values (p.u.); `P^gen` is the
/// controlled generation; `w` is the energy function relative to the
/// equilibrium of the disturbance active at that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub state_dim: usize,
    pub times: Vec<f64>,
    /// Deviation-coordinate states, `state_dim` per sample.
    pub states: Vec<f64>,
    omega: Vec<f64>,
    v: Vec<f64>,
    p_gen: Vec<f64>,
    pub w: Vec<f64>,
    /// Disturbance after the last event.
    pub p_m_final: Vec<f64>,
    pub plan: StepPlan,
}

impl Trajectory {
    fn with_capacity(n: usize, state_dim: usize, samples: usize, p_m: Vec<f64>, plan: StepPlan) -> Self {
        Self {
            n,
            state_dim,
            times: Vec::with_capacity(samples),
            states: Vec::with_capacity(samples * state_dim),
            omega: Vec::with_capacity(samples * n),
            v: Vec::with_capacity(samples * n),
            p_gen: Vec::with_capacity(samples * n),
            w: Vec::with_capacity(samples),
            p_m_final: p_m,
            plan,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn omega(&self, k: usize) -> &[f64] {
        &self.omega[k * self.n..(k + 1) * self.n]
    }

    pub fn v(&self, k: usize) -> &[f64] {
        &self.v[k * self.n..(k + 1) * self.n]
    }

    pub fn p_gen(&self, k: usize) -> &[f64] {
        &self.p_gen[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    /// Index of the first stored sample at or after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s >= t - 1e-9)
    }

    /// Whether the substep count violated the step-size rule.
    pub fn step_warning(&self) -> bool {
        self.plan.warning
    }
}

/// Per-segment data for recording outputs.
struct Recorder<'a> {
    plant: &'a Plant,
    weight: Matrix,
    p_gen_map: Matrix,
    x_eq: Vec<f64>,
    x_bar: Vec<f64>,
}

impl Recorder<'_> {
    fn record(&mut self, traj: &mut Trajectory, t: f64, x: &[f64]) {
        let p = &self.plant.params;
        let n = p.n;
        traj.times.push(t);
        traj.states.extend_from_slice(x);
        traj.omega.extend(x[..n].iter().map(|w| w + p.omega_ref));
        traj.v.extend(x[n..2 * n].iter().zip(&p.v_ref).map(|(v, r)| v + r));
        traj.p_gen.extend(self.p_gen_map.matvec(x));
        for ((d, xi), e) in self.x_bar.iter_mut().zip(x).zip(&self.x_eq) {
            *d = xi - e;
        }
        traj.w.push(quadratic_value(&self.weight, &self.x_bar));
    }
}

fn apply_events(events: &[Event], next: &mut usize, t: f64, dt: f64, p_m: &mut [f64]) -> bool {
    let mut changed = false;
    while *next < events.len() && events[*next].t <= t + 1e-9 * dt {
        p_m[events[*next].area] += events[*next].dp_m;
        *next += 1;
        changed = true;
    }
    changed
}

fn check_blowup(x: &[f64], t: f64, plan: &StepPlan) -> Result<(), SimError> {
    let magnitude = x.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if magnitude > BLOWUP_LIMIT {
        return Err(SimError::StepSizeUnstable {
            t,
            magnitude,
            h_rho: plan.h * plan.rho,
        });
    }
    Ok(())
}

/// Integrates a scenario in linear or nonlinear mode.
///
/// RL-line scenarios are dispatched to [`integrate_rl_lines`].
pub fn integrate(scn: &Scenario) -> Result<Trajectory, SimError> {
    scn.validate()?;
    match scn.mode {
        SimMode::Linear => {
            let sys = scn.plant.assemble();
            let weight = lyapunov_weight(&scn.plant.params, &scn.plant.gains, scn.plant.config);
            let plant = &scn.plant;
            run_linear(scn, &sys.a, sys.p_gen_map.clone(), weight, |p_m| {
                Ok((plant.forcing(p_m), equilibrium_state(plant, p_m)?))
            })
        }
        SimMode::NonlinearPowerCurrent => run_nonlinear(scn),
        SimMode::RlLines => integrate_rl_lines(scn),
    }
}

/// Integrates the linear closed loop with inductive lines.
pub fn integrate_rl_lines(scn: &Scenario) -> Result<Trajectory, SimError> {
    scn.validate()?;
    if scn.mode != SimMode::RlLines {
        return Err(SimError::Invalid("integrate_rl_lines needs mode rl-lines".into()));
    }
    let rl = assemble_rl(&scn.plant, &scn.lines)?;
    let lumped = rl.lumped.clone();
    let a = rl.sys.a.clone();
    let n_lines = scn.lines.len();
    run_linear(scn, &a, rl.sys.p_gen_map.clone(), rl.weight.clone(), |p_m| {
        let mut sys = rl.sys.clone();
        sys.b = lumped.forcing(p_m);
        sys.b.resize(sys.dim(), 0.0);
        let x_eq = match equilibrium(&sys) {
            Ok(r) => r.x0,
            // complete-graph γ = 0: fall back to the averaged equilibrium and
            // the matching line currents
            Err(AnalysisError::SingularSystem { .. }) => {
                let mut x = equilibrium_state(&lumped, p_m)?;
                let n = lumped.n();
                for e in lumped.dc.edges().iter().take(n_lines) {
                    x.push((x[n + e.i] - x[n + e.j]) * e.weight);
                }
                x
            }
            Err(e) => return Err(e.into()),
        };
        Ok((sys.b, x_eq))
    })
}

fn run_linear(
    scn: &Scenario,
    a: &Matrix,
    p_gen_map: Matrix,
    weight: Matrix,
    mut segment: impl FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>), SimError>,
) -> Result<Trajectory, SimError> {
    let plan = plan_steps(a, scn.dt, scn.substeps);
    let map = AffineMap::rk4_step(a, plan.h).power(plan.substeps);
    let dim = a.rows();
    let steps = scn.samples();
    let mut p_m = scn.plant.params.p_m.clone();
    let mut next_event = 0;
    apply_events(&scn.events, &mut next_event, 0.0, scn.dt, &mut p_m);
    let (mut b, x_eq) = segment(&p_m)?;
    let mut rec = Recorder {
        plant: &scn.plant,
        weight,
        p_gen_map,
        x_eq,
        x_bar: vec![0.0; dim],
    };

    let mut x = scn.initial.clone().unwrap_or_else(|| vec![0.0; dim]);
    let mut x_next = vec![0.0; dim];
    let stored = steps / scn.record_every + 1;
    let mut traj = Trajectory::with_capacity(scn.plant.n(), dim, stored, Vec::new(), plan);
    rec.record(&mut traj, 0.0, &x);
    for k in 1..=steps {
        map.apply(&x, &b, &mut x_next);
        std::mem::swap(&mut x, &mut x_next);
        let t = k as f64 * scn.dt;
        check_blowup(&x, t, &plan)?;
        if apply_events(&scn.events, &mut next_event, t, scn.dt, &mut p_m) {
            let (nb, eq) = segment(&p_m)?;
            b = nb;
            rec.x_eq = eq;
        }
        if k % scn.record_every == 0 {
            rec.record(&mut traj, t, &x);
        }
    }
    traj.p_m_final = p_m;
    Ok(traj)
}

fn run_nonlinear(scn: &Scenario) -> Result<Trajectory, SimError> {
    let plant = &scn.plant;
    let sys = plant.assemble();
    let plan = plan_steps(&sys.a, scn.dt, scn.substeps);
    let dim = sys.dim();
    let n = plant.n();
    let eta_len = plant.config.eta_len(n);
    let steps = scn.samples();
    let mut p_m = plant.params.p_m.clone();
    let mut next_event = 0;
    apply_events(&scn.events, &mut next_event, 0.0, scn.dt, &mut p_m);
    let mut rec = Recorder {
        plant,
        weight: lyapunov_weight(&plant.params, &plant.gains, plant.config),
        p_gen_map: sys.p_gen_map.clone(),
        x_eq: equilibrium_state(plant, &p_m)?,
        x_bar: vec![0.0; dim],
    };

    let mut x = scn.initial.clone().unwrap_or_else(|| vec![0.0; dim]);
    let stored = steps / scn.record_every + 1;
    let mut traj = Trajectory::with_capacity(n, dim, stored, Vec::new(), plan);
    rec.record(&mut traj, 0.0, &x);

    let p = &plant.params;
    let mut state = PlantState {
        omega: vec![0.0; n],
        v: vec![0.0; n],
        eta: vec![0.0; eta_len],
    };
    let mut deriv = state.clone();
    let mut scratch = Rk4Scratch::new(dim);
    for k in 1..=steps {
        for _ in 0..plan.substeps {
            let p_m_now = &p_m;
            rk4_step(
                |y: &[f64], dy: &mut [f64]| -> Result<(), SimError> {
                    for i in 0..n {
                        state.omega[i] = y[i] + p.omega_ref;
                        state.v[i] = y[n + i] + p.v_ref[i];
                    }
                    state.eta.copy_from_slice(&y[2 * n..]);
                    plant.rhs_into(&state, p_m_now, PowerCurrentMode::NonlinearPowerCurrent, &mut deriv)?;
                    dy[..n].copy_from_slice(&deriv.omega);
                    dy[n..2 * n].copy_from_slice(&deriv.v);
                    dy[2 * n..].copy_from_slice(&deriv.eta);
                    Ok(())
                },
                &mut x,
                plan.h,
                &mut scratch,
            )?;
        }
        let t = k as f64 * scn.dt;
        check_blowup(&x, t, &plan)?;
        if apply_events(&scn.events, &mut next_event, t, scn.dt, &mut p_m) {
            rec.x_eq = equilibrium_state(plant, &p_m)?;
        }
        if k % scn.record_every == 0 {
            rec.record(&mut traj, t, &x);
        }
    }
    traj.p_m_final = p_m;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::equilibrium;
    use crate::netgraph::{GraphKind, WeightedGraph};
    use crate::plant::{ControllerConfig, ControllerGains, PlantParams};

    fn small_plant(config: ControllerConfig) -> Plant {
        let dc = WeightedGraph::dc_from_resistances(3, [(0, 1, 0.0586), (1, 2, 0.0878), (0, 2, 0.0732)])
            .unwrap();
        let comm = WeightedGraph::new(3, GraphKind::Comm, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        Plant::new(PlantParams::uniform(3), ControllerGains::benchmark(3), dc, Some(comm), config).unwrap()
    }

    fn fault() -> Vec<Event> {
        vec![Event {
            t: 0.1,
            area: 0,
            dp_m: -0.2,
        }]
    }

    #[test]
    fn quiescent_stays_at_origin() {
        for mode in [SimMode::Linear, SimMode::NonlinearPowerCurrent] {
            let scn = Scenario::new(small_plant(ControllerConfig::SecondaryDistributed))
                .with_horizon(0.05, 1e-3)
                .with_mode(mode);
            let traj = integrate(&scn).unwrap();
            assert!(traj.states.iter().all(|v| *v == 0.0), "{mode:?}");
            assert_eq!(traj.len(), 51);
        }
    }

    #[test]
    fn events_switch_forcing_and_keep_state_continuous() {
        let scn = Scenario::new(small_plant(ControllerConfig::DroopOnly))
            .with_events(fault())
            .with_horizon(0.3, 1e-3);
        let traj = integrate(&scn).unwrap();
        let k = traj.index_at(0.1).unwrap();
        assert!(traj.state(k).iter().all(|v| *v == 0.0));
        assert!(traj.state(k + 1)[0] < 0.0);
        assert_eq!(traj.p_m_final, vec![-0.2, 0.0, 0.0]);
        // W jumps at the event (new equilibrium), then decreases
        assert!(traj.w[k - 1] == 0.0 && traj.w[k] > 0.0);
        for j in k..traj.last() {
            assert!(traj.w[j + 1] <= traj.w[j] + 1e-9);
        }
    }

    #[test]
    fn droop_settles_to_equilibrium() {
        let plant = small_plant(ControllerConfig::DroopOnly);
        let scn = Scenario::new(plant.clone())
            .with_events(fault())
            .with_horizon(20.0, 1e-3);
        let traj = integrate(&scn).unwrap();
        let mut sys = plant.assemble();
        sys.b = plant.forcing(&[-0.2, 0.0, 0.0]);
        let eq = equilibrium(&sys).unwrap();
        let last = traj.state(traj.last());
        for (u, w) in last.iter().zip(&eq.x0) {
            assert!((u - w).abs() < 1e-6, "{u} vs {w}");
        }
    }

    #[test]
    fn linear_and_nonlinear_agree_for_small_disturbances() {
        let plant = small_plant(ControllerConfig::SecondaryDistributed);
        let events = vec![Event {
            t: 0.0,
            area: 1,
            dp_m: -0.001,
        }];
        let lin = integrate(
            &Scenario::new(plant.clone())
                .with_events(events.clone())
                .with_horizon(0.5, 1e-3),
        )
        .unwrap();
        let non = integrate(
            &Scenario::new(plant)
                .with_events(events)
                .with_horizon(0.5, 1e-3)
                .with_mode(SimMode::NonlinearPowerCurrent),
        )
        .unwrap();
        let k = lin.last();
        for (u, w) in lin.omega(k).iter().zip(non.omega(k)) {
            assert!((u - w).abs() < 1e-5, "{u} vs {w}");
        }
    }

    #[test]
    fn forced_coarse_step_blows_up() {
        let mut scn = Scenario::new(small_plant(ControllerConfig::DroopOnly))
            .with_events(fault())
            .with_horizon(1.0, 1e-3);
        scn.substeps = Some(1);
        match integrate(&scn) {
            Err(SimError::StepSizeUnstable { h_rho, .. }) => assert!(h_rho > STEP_NORM_LIMIT),
            other => panic!("expected blow-up, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn rl_mode_with_tiny_inductance_tracks_resistive_run() {
        let plant = small_plant(ControllerConfig::DroopOnly);
        let base = Scenario::new(plant)
            .with_events(vec![Event {
                t: 0.01,
                area: 0,
                dp_m: -0.2,
            }])
            .with_horizon(0.2, 1e-4);
        let res = integrate(&base).unwrap();
        let mut rl = base.clone().with_mode(SimMode::RlLines);
        rl.lines = vec![LineRl { l: 1e-9, c: 0.0 }; 3];
        let rl = integrate(&rl).unwrap();
        let boundary = rl.index_at(0.02).unwrap();
        for k in boundary..rl.len() {
            for (u, w) in rl.state(k)[..6].iter().zip(&res.state(k)[..6]) {
                assert!((u - w).abs() < 1e-4, "t = {}: {u} vs {w}", rl.times[k]);
            }
        }
    }

    #[test]
    fn scenario_validation() {
        let plant = small_plant(ControllerConfig::DroopOnly);
        let mut scn = Scenario::new(plant.clone()).with_horizon(1.0, 0.0);
        assert!(scn.validate().is_err());
        scn = Scenario::new(plant.clone()).with_horizon(1.0, 1e-3).with_events(vec![
            Event { t: 0.5, area: 0, dp_m: 0.1 },
            Event { t: 0.2, area: 0, dp_m: 0.1 },
        ]);
        assert!(scn.validate().is_err());
        scn = Scenario::new(plant.clone())
            .with_horizon(1.0, 1e-3)
            .with_events(vec![Event { t: 2.0, area: 0, dp_m: 0.1 }]);
        assert!(scn.validate().is_err());
        scn = Scenario::new(plant.clone())
            .with_horizon(1.0, 1e-3)
            .with_events(vec![Event { t: 0.5, area: 3, dp_m: 0.1 }]);
        assert!(scn.validate().is_err());
        scn = Scenario::new(plant).with_horizon(1.0, 1e-3).with_mode(SimMode::RlLines);
        assert!(integrate(&scn).is_err());
    }
}
