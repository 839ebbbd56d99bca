//! Physical parameters, control laws and closed-loop assembly.
//!
//! Each AC area is a single aggregate generator obeying the swing equation
//! `m_i ω̇_i = P^gen_i + P^nom_i + P^m_i - P^inj_i`, attached to a converter
//! terminal whose DC voltage obeys `C_i V̇_i = -Σ_j (V_i - V_j)/R_ij + I^inj_i`.
//! Converters inject `P^inj_i = P^inj,nom_i + K^ω_i ω̂_i + K^V_i (V^ref_i - V_i)`
//! and generation follows one of four controller configurations.
//!
//! Linear models are written in deviation coordinates `ω̂ = ω - ω_ref·1`,
//! `V̂ = V - V^ref`, with the state ordered `[ω̂, V̂, η]`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densela::Matrix;
use crate::netgraph::{connectivity_check, GraphError, WeightedGraph};

/// Aggregate inertia used when a scenario does not give one (p.u.·s²).
pub const DEFAULT_INERTIA: f64 = 0.1;
/// Converter terminal capacitance (p.u.).
pub const DEFAULT_TERMINAL_CAPACITANCE: f64 = 0.375e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("DC grid has {grid} nodes but the plant has {areas} areas")]
    GridSizeMismatch { grid: usize, areas: usize },
    #[error("distributed secondary control requires a communication graph")]
    MissingCommGraph,
    #[error("communication graph is not connected")]
    CommDisconnected,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("state does not match the {config:?} layout: {reason}")]
    StateMismatch {
        config: ControllerConfig,
        reason: String,
    },
    #[error("voltage collapse at area {area}: V = {v} below half of nominal")]
    VoltageCollapse { area: usize, v: f64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> PlantError {
    PlantError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

fn check_len(field: &'static str, v: &[f64], n: usize) -> Result<(), PlantError> {
    if v.len() != n {
        return Err(invalid(field, format!("expected {n} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(())
}

fn check_positive(field: &'static str, v: &[f64]) -> Result<(), PlantError> {
    match v.iter().position(|&x| !(x > 0.0)) {
        Some(i) => Err(invalid(field, format!("entry {} must be > 0, got {}", i + 1, v[i]))),
        None => Ok(()),
    }
}

/// Per-area physical constants, references and disturbances (all p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub n: usize,
    /// Inertia `m_i`.
    pub m: Vec<f64>,
    /// Terminal capacitance `C_i`.
    pub cap: Vec<f64>,
    pub v_nom: f64,
    pub v_ref: Vec<f64>,
    pub omega_ref: f64,
    /// Nominal generated power `P^nom_i`.
    pub p_nom: Vec<f64>,
    /// Nominal injected power `P^inj,nom_i`; must equal `p_nom`.
    pub p_inj_nom: Vec<f64>,
    /// Uncontrolled generation deviation `P^m_i`.
    pub p_m: Vec<f64>,
}

impl PlantParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: Vec<f64>,
        cap: Vec<f64>,
        v_nom: f64,
        v_ref: Vec<f64>,
        omega_ref: f64,
        p_nom: Vec<f64>,
        p_inj_nom: Vec<f64>,
        p_m: Vec<f64>,
    ) -> Result<Self, PlantError> {
        let p = Self {
            n: m.len(),
            m,
            cap,
            v_nom,
            v_ref,
            omega_ref,
            p_nom,
            p_inj_nom,
            p_m,
        };
        p.validate()?;
        Ok(p)
    }

    /// `n` identical areas at nominal operation: default inertia and
    /// capacitance, unit references, zero powers.
    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            m: vec![DEFAULT_INERTIA; n],
            cap: vec![DEFAULT_TERMINAL_CAPACITANCE; n],
            v_nom: 1.0,
            v_ref: vec![1.0; n],
            omega_ref: 1.0,
            p_nom: vec![0.0; n],
            p_inj_nom: vec![0.0; n],
            p_m: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let n = self.n;
        if n == 0 {
            return Err(invalid("n", "at least one area is required"));
        }
        check_len("m", &self.m, n)?;
        check_len("cap", &self.cap, n)?;
        check_len("v_ref", &self.v_ref, n)?;
        check_len("p_nom", &self.p_nom, n)?;
        check_len("p_inj_nom", &self.p_inj_nom, n)?;
        check_len("p_m", &self.p_m, n)?;
        check_positive("m", &self.m)?;
        check_positive("cap", &self.cap)?;
        if !(self.v_nom > 0.0 && self.v_nom.is_finite()) {
            return Err(invalid("v_nom", format!("must be > 0, got {}", self.v_nom)));
        }
        if !self.omega_ref.is_finite() {
            return Err(invalid("omega_ref", "must be finite"));
        }
        for (i, (a, b)) in self.p_nom.iter().zip(&self.p_inj_nom).enumerate() {
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(invalid(
                    "p_inj_nom",
                    format!(
                        "nominal injected power must equal nominal generation at area {} ({b} != {a})",
                        i + 1
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn with_p_m(mut self, p_m: Vec<f64>) -> Self {
        self.p_m = p_m;
        self
    }
}

/// Controller gains; per-area arrays plus the scalars `γ` and `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k_omega: Vec<f64>,
    pub k_v: Vec<f64>,
    pub k_droop: Vec<f64>,
    pub k_droop_i: Vec<f64>,
    /// Leak of the complete-graph integrators, `≥ 0`.
    pub gamma: f64,
    /// Consensus gain of the distributed integrators, `> 0`.
    pub delta: f64,
}

impl ControllerGains {
    pub fn new(
        k_omega: Vec<f64>,
        k_v: Vec<f64>,
        k_droop: Vec<f64>,
        k_droop_i: Vec<f64>,
        gamma: f64,
        delta: f64,
    ) -> Result<Self, PlantError> {
        let g = Self {
            k_omega,
            k_v,
            k_droop,
            k_droop_i,
            gamma,
            delta,
        };
        g.validate(g.k_omega.len())?;
        Ok(g)
    }

    pub fn uniform(
        n: usize,
        k_omega: f64,
        k_v: f64,
        k_droop: f64,
        k_droop_i: f64,
        gamma: f64,
        delta: f64,
    ) -> Self {
        Self {
            k_omega: vec![k_omega; n],
            k_v: vec![k_v; n],
            k_droop: vec![k_droop; n],
            k_droop_i: vec![k_droop_i; n],
            gamma,
            delta,
        }
    }

    /// The six-terminal benchmark gains: `K^ω = 9000`, `K^V = 110`,
    /// `K^droop = 8`, `K^droop,I = 10`, `γ = 0`, `δ = 5`.
    pub fn benchmark(n: usize) -> Self {
        Self::uniform(n, 9000.0, 110.0, 8.0, 10.0, 0.0, 5.0)
    }

    pub fn validate(&self, n: usize) -> Result<(), PlantError> {
        for (field, v) in [
            ("k_omega", &self.k_omega),
            ("k_v", &self.k_v),
            ("k_droop", &self.k_droop),
            ("k_droop_i", &self.k_droop_i),
        ] {
            check_len(field, v, n)?;
            check_positive(field, v)?;
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be > 0, got {}", self.delta)));
        }
        Ok(())
    }

    /// `(k^ω, k^V, k^droop)` when all three are identical across areas.
    pub fn uniform_scalars(&self) -> Option<(f64, f64, f64)> {
        let same = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        if self.k_omega.is_empty() {
            return None;
        }
        (same(&self.k_omega) && same(&self.k_v) && same(&self.k_droop))
            .then(|| (self.k_omega[0], self.k_v[0], self.k_droop[0]))
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform_scalars().is_some()
    }

    /// Coefficient `(K^V_i / K^ω_i) K^droop,I_i` of the secondary term.
    pub fn secondary_coefficient(&self, i: usize) -> f64 {
        self.k_v[i] / self.k_omega[i] * self.k_droop_i[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerConfig {
    /// Decentralized frequency droop.
    DroopOnly,
    /// Secondary control averaging all integrators (complete graph).
    SecondaryComplete,
    /// The complete-graph controller reduced to one averaged integrator.
    SecondaryProjected,
    /// Secondary control with a consensus filter over the communication graph.
    SecondaryDistributed,
}

impl ControllerConfig {
    pub const ALL: [ControllerConfig; 4] = [
        ControllerConfig::DroopOnly,
        ControllerConfig::SecondaryComplete,
        ControllerConfig::SecondaryProjected,
        ControllerConfig::SecondaryDistributed,
    ];

    pub fn has_secondary(self) -> bool {
        self != ControllerConfig::DroopOnly
    }

    /// Length of the integrator block for `n` areas.
    pub fn eta_len(self, n: usize) -> usize {
        match self {
            ControllerConfig::DroopOnly => 0,
            ControllerConfig::SecondaryProjected => 1,
            ControllerConfig::SecondaryComplete | ControllerConfig::SecondaryDistributed => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateBlock {
    OmegaHat(usize),
    VHat(usize),
    Eta(usize),
    EtaPrime,
    /// Deviation of the line currents from their nominal values.
    LineCurrent(usize),
}

impl StateBlock {
    pub fn len(self) -> usize {
        match self {
            StateBlock::OmegaHat(k)
            | StateBlock::VHat(k)
            | StateBlock::Eta(k)
            | StateBlock::LineCurrent(k) => k,
            StateBlock::EtaPrime => 1,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// Ordered state blocks of a linear closed-loop system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    blocks: Vec<StateBlock>,
}

impl StateLayout {
    pub fn new(blocks: Vec<StateBlock>) -> Self {
        Self { blocks }
    }

    pub fn for_config(config: ControllerConfig, n: usize) -> Self {
        let mut blocks = vec![StateBlock::OmegaHat(n), StateBlock::VHat(n)];
        match config {
            ControllerConfig::DroopOnly => {}
            ControllerConfig::SecondaryProjected => blocks.push(StateBlock::EtaPrime),
            ControllerConfig::SecondaryComplete | ControllerConfig::SecondaryDistributed => {
                blocks.push(StateBlock::Eta(n))
            }
        }
        Self { blocks }
    }

    pub fn blocks(&self) -> &[StateBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    fn range_where(&self, pred: impl Fn(&StateBlock) -> bool) -> Option<Range<usize>> {
        let mut start = 0;
        for b in &self.blocks {
            if pred(b) {
                return Some(start..start + b.len());
            }
            start += b.len();
        }
        None
    }

    pub fn omega(&self) -> Range<usize> {
        self.range_where(|b| matches!(b, StateBlock::OmegaHat(_)))
            .expect("layout always has an OmegaHat block")
    }

    pub fn v(&self) -> Range<usize> {
        self.range_where(|b| matches!(b, StateBlock::VHat(_)))
            .expect("layout always has a VHat block")
    }

    /// Integrator states (`η` or `η'`), empty for droop-only layouts.
    pub fn eta(&self) -> Range<usize> {
        self.range_where(|b| matches!(b, StateBlock::Eta(_) | StateBlock::EtaPrime))
            .unwrap_or(0..0)
    }

    pub fn line_currents(&self) -> Range<usize> {
        self.range_where(|b| matches!(b, StateBlock::LineCurrent(_)))
            .unwrap_or(0..0)
    }
}

/// Linear closed loop `ẋ = A x + b` in deviation coordinates.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub config: ControllerConfig,
    pub n: usize,
    pub a: Matrix,
    /// Constant forcing `(M P^m, 0, …)`.
    pub b: Vec<f64>,
    pub layout: StateLayout,
    /// Linear map from the state to the controlled generation `P^gen`.
    pub p_gen_map: Matrix,
    pub gains: ControllerGains,
}

impl ClosedLoopSystem {
    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn p_gen(&self, x: &[f64]) -> Vec<f64> {
        self.p_gen_map.matvec(x)
    }
}

/// How the converter current follows from the injected power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerCurrentMode {
    /// `V_i I^inj_i = P^inj_i`.
    NonlinearPowerCurrent,
    /// `V^nom I^inj_i = P^inj_i`.
    Linearized,
}

/// Absolute plant state: frequencies, DC voltages and integrator states.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
    /// `η` (n entries), `η'` (one entry) or empty, depending on the config.
    pub eta: Vec<f64>,
}

/// A fully specified plant under one controller configuration.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub gains: ControllerGains,
    pub dc: WeightedGraph,
    /// Only consulted for [`ControllerConfig::SecondaryDistributed`].
    pub comm: Option<WeightedGraph>,
    pub config: ControllerConfig,
}

impl Plant {
    pub fn new(
        params: PlantParams,
        gains: ControllerGains,
        dc: WeightedGraph,
        comm: Option<WeightedGraph>,
        config: ControllerConfig,
    ) -> Result<Self, PlantError> {
        params.validate()?;
        gains.validate(params.n)?;
        if dc.n() != params.n {
            return Err(PlantError::GridSizeMismatch {
                grid: dc.n(),
                areas: params.n,
            });
        }
        if !connectivity_check(&dc) {
            return Err(GraphError::Disconnected.into());
        }
        if config == ControllerConfig::SecondaryDistributed {
            let c = comm.as_ref().ok_or(PlantError::MissingCommGraph)?;
            if c.n() != params.n {
                return Err(PlantError::GridSizeMismatch {
                    grid: c.n(),
                    areas: params.n,
                });
            }
            if !connectivity_check(c) {
                return Err(PlantError::CommDisconnected);
            }
        }
        Ok(Self {
            params,
            gains,
            dc,
            comm,
            config,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    /// Same plant under another configuration (revalidated).
    pub fn with_config(&self, config: ControllerConfig) -> Result<Self, PlantError> {
        Self::new(
            self.params.clone(),
            self.gains.clone(),
            self.dc.clone(),
            self.comm.clone(),
            config,
        )
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::for_config(self.config, self.n())
    }

    /// Forcing vector `(M P^m, 0, …)` for the given disturbance.
    pub fn forcing(&self, p_m: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut b = vec![0.0; self.layout().dim()];
        for i in 0..n {
            b[i] = p_m[i] / self.params.m[i];
        }
        b
    }

    /// Assembles the linear closed loop for this configuration.
    pub fn assemble(&self) -> ClosedLoopSystem {
        let n = self.n();
        let p = &self.params;
        let g = &self.gains;
        let layout = self.layout();
        let dim = layout.dim();
        let (om, vr, er) = (layout.omega(), layout.v(), layout.eta());
        let l_r = self.dc.laplacian();
        let mut a = Matrix::zeros(dim, dim);

        for i in 0..n {
            let inv_m = 1.0 / p.m[i];
            let inv_c = 1.0 / p.cap[i];
            a[(om.start + i, om.start + i)] = -(g.k_omega[i] + g.k_droop[i]) * inv_m;
            a[(om.start + i, vr.start + i)] = g.k_v[i] * inv_m;
            a[(vr.start + i, om.start + i)] = g.k_omega[i] / p.v_nom * inv_c;
            for j in 0..n {
                let mut lij = l_r[(i, j)];
                if i == j {
                    lij += g.k_v[i] / p.v_nom;
                }
                a[(vr.start + i, vr.start + j)] = -lij * inv_c;
            }

            let s = g.secondary_coefficient(i) * inv_m;
            match self.config {
                ControllerConfig::DroopOnly => {}
                ControllerConfig::SecondaryComplete => {
                    for j in 0..n {
                        a[(om.start + i, er.start + j)] = -s / n as f64;
                    }
                    a[(er.start + i, om.start + i)] = g.k_droop_i[i];
                    a[(er.start + i, er.start + i)] = -g.gamma;
                }
                ControllerConfig::SecondaryProjected => {
                    a[(om.start + i, er.start)] = -s;
                    a[(er.start, om.start + i)] = g.k_droop_i[i] / n as f64;
                }
                ControllerConfig::SecondaryDistributed => {
                    a[(om.start + i, er.start + i)] = -s;
                    a[(er.start + i, om.start + i)] = g.k_droop_i[i];
                }
            }
        }
        match self.config {
            ControllerConfig::SecondaryProjected => a[(er.start, er.start)] = -g.gamma,
            ControllerConfig::SecondaryDistributed => {
                let l_c = self
                    .comm
                    .as_ref()
                    .expect("validated at construction")
                    .laplacian();
                for i in 0..n {
                    for j in 0..n {
                        a[(er.start + i, er.start + j)] = -g.delta * l_c[(i, j)];
                    }
                }
            }
            _ => {}
        }

        ClosedLoopSystem {
            config: self.config,
            n,
            b: self.forcing(&p.p_m),
            p_gen_map: self.p_gen_map(&layout),
            a,
            layout,
            gains: g.clone(),
        }
    }

    fn p_gen_map(&self, layout: &StateLayout) -> Matrix {
        let n = self.n();
        let g = &self.gains;
        let (om, er) = (layout.omega(), layout.eta());
        let mut c = Matrix::zeros(n, layout.dim());
        for i in 0..n {
            c[(i, om.start + i)] = -g.k_droop[i];
            let s = g.secondary_coefficient(i);
            match self.config {
                ControllerConfig::DroopOnly => {}
                ControllerConfig::SecondaryComplete => {
                    for j in 0..n {
                        c[(i, er.start + j)] = -s / n as f64;
                    }
                }
                ControllerConfig::SecondaryProjected => c[(i, er.start)] = -s,
                ControllerConfig::SecondaryDistributed => c[(i, er.start + i)] = -s,
            }
        }
        c
    }

    fn check_state(&self, state: &PlantState) -> Result<(), PlantError> {
        let n = self.n();
        let want_eta = self.config.eta_len(n);
        if state.omega.len() != n || state.v.len() != n || state.eta.len() != want_eta {
            return Err(PlantError::StateMismatch {
                config: self.config,
                reason: format!(
                    "expected omega/v/eta lengths {n}/{n}/{want_eta}, got {}/{}/{}",
                    state.omega.len(),
                    state.v.len(),
                    state.eta.len()
                ),
            });
        }
        Ok(())
    }

    /// Control-law outputs `(P^gen, P^inj)` at an absolute state.
    pub fn controller_outputs(&self, state: &PlantState) -> Result<(Vec<f64>, Vec<f64>), PlantError> {
        self.check_state(state)?;
        Ok(controller_outputs(
            &self.params,
            &self.gains,
            state,
            self.config,
        ))
    }

    /// Time derivative of the absolute state from the raw plant equations.
    pub fn nonlinear_rhs(
        &self,
        state: &PlantState,
        mode: PowerCurrentMode,
    ) -> Result<PlantState, PlantError> {
        self.check_state(state)?;
        let mut out = PlantState {
            omega: vec![0.0; self.n()],
            v: vec![0.0; self.n()],
            eta: vec![0.0; state.eta.len()],
        };
        self.rhs_into(state, &self.params.p_m, mode, &mut out)?;
        Ok(out)
    }

    /// Allocation-free right-hand side with an explicit disturbance vector.
    pub(crate) fn rhs_into(
        &self,
        state: &PlantState,
        p_m: &[f64],
        mode: PowerCurrentMode,
        out: &mut PlantState,
    ) -> Result<(), PlantError> {
        let n = self.n();
        let p = &self.params;
        let g = &self.gains;
        if mode == PowerCurrentMode::NonlinearPowerCurrent {
            if let Some(i) = state.v.iter().position(|&v| !(v > 0.5 * p.v_nom)) {
                return Err(PlantError::VoltageCollapse {
                    area: i + 1,
                    v: state.v[i],
                });
            }
        }
        let eta_avg = if state.eta.is_empty() {
            0.0
        } else {
            state.eta.iter().sum::<f64>() / state.eta.len() as f64
        };
        for i in 0..n {
            let w_hat = state.omega[i] - p.omega_ref;
            let p_gen = generation(self.config, g, i, w_hat, &state.eta, eta_avg);
            let p_inj = p.p_inj_nom[i] + g.k_omega[i] * w_hat + g.k_v[i] * (p.v_ref[i] - state.v[i]);
            out.omega[i] = (p_gen + p.p_nom[i] + p_m[i] - p_inj) / p.m[i];

            let line_current: f64 = self
                .dc
                .neighbors(i)
                .map(|(j, cond)| cond * (state.v[i] - state.v[j]))
                .sum();
            let i_inj = match mode {
                PowerCurrentMode::NonlinearPowerCurrent => p_inj / state.v[i],
                PowerCurrentMode::Linearized => p_inj / p.v_nom,
            };
            out.v[i] = (-line_current + i_inj) / p.cap[i];
        }
        match self.config {
            ControllerConfig::DroopOnly => {}
            ControllerConfig::SecondaryComplete => {
                for i in 0..n {
                    out.eta[i] = g.k_droop_i[i] * (state.omega[i] - p.omega_ref) - g.gamma * state.eta[i];
                }
            }
            ControllerConfig::SecondaryProjected => {
                let avg: f64 = (0..n)
                    .map(|i| g.k_droop_i[i] * (state.omega[i] - p.omega_ref))
                    .sum::<f64>()
                    / n as f64;
                out.eta[0] = avg - g.gamma * state.eta[0];
            }
            ControllerConfig::SecondaryDistributed => {
                let comm = self.comm.as_ref().expect("validated at construction");
                for i in 0..n {
                    let diffusion: f64 = comm
                        .neighbors(i)
                        .map(|(j, c)| c * (state.eta[i] - state.eta[j]))
                        .sum();
                    out.eta[i] = g.k_droop_i[i] * (state.omega[i] - p.omega_ref) - g.delta * diffusion;
                }
            }
        }
        Ok(())
    }

    /// Flattens an absolute state into deviation coordinates.
    pub fn to_deviation(&self, state: &PlantState) -> Result<Vec<f64>, PlantError> {
        self.check_state(state)?;
        let p = &self.params;
        let mut x: Vec<f64> = state.omega.iter().map(|w| w - p.omega_ref).collect();
        x.extend(state.v.iter().zip(&p.v_ref).map(|(v, r)| v - r));
        x.extend_from_slice(&state.eta);
        Ok(x)
    }

    /// Inverse of [`to_deviation`](Self::to_deviation).
    pub fn from_deviation(&self, x: &[f64]) -> PlantState {
        let layout = self.layout();
        let p = &self.params;
        PlantState {
            omega: x[layout.omega()].iter().map(|w| w + p.omega_ref).collect(),
            v: x[layout.v()].iter().zip(&p.v_ref).map(|(v, r)| v + r).collect(),
            eta: x[layout.eta()].to_vec(),
        }
    }

    /// `‖P^inj,nom / V^nom - L_R V^ref‖_∞`; zero when the reference voltages
    /// are a DC-grid equilibrium of the linearized model.
    pub fn reference_imbalance(&self) -> f64 {
        let p = &self.params;
        let lv = self.dc.laplacian().matvec(&p.v_ref);
        lv.iter()
            .zip(&p.p_inj_nom)
            .map(|(l, pin)| (pin / p.v_nom - l).abs())
            .fold(0.0, f64::max)
    }
}

fn generation(
    config: ControllerConfig,
    g: &ControllerGains,
    i: usize,
    w_hat: f64,
    eta: &[f64],
    eta_avg: f64,
) -> f64 {
    let droop = -g.k_droop[i] * w_hat;
    let s = g.secondary_coefficient(i);
    match config {
        ControllerConfig::DroopOnly => droop,
        ControllerConfig::SecondaryComplete => droop - s * eta_avg,
        ControllerConfig::SecondaryProjected => droop - s * eta[0],
        ControllerConfig::SecondaryDistributed => droop - s * eta[i],
    }
}

/// Evaluates the generation and converter control laws at an absolute state.
///
/// `state.eta` holds the integrator states for secondary configurations and
/// is ignored for droop-only control.
pub fn controller_outputs(
    params: &PlantParams,
    gains: &ControllerGains,
    state: &PlantState,
    config: ControllerConfig,
) -> (Vec<f64>, Vec<f64>) {
    let eta_avg = if state.eta.is_empty() {
        0.0
    } else {
        state.eta.iter().sum::<f64>() / state.eta.len() as f64
    };
    (0..params.n)
        .map(|i| {
            let w_hat = state.omega[i] - params.omega_ref;
            let p_gen = generation(config, gains, i, w_hat, &state.eta, eta_avg);
            let p_inj = params.p_inj_nom[i]
                + gains.k_omega[i] * w_hat
                + gains.k_v[i] * (params.v_ref[i] - state.v[i]);
            (p_gen, p_inj)
        })
        .unzip()
}

/// Assembles the closed loop from loose parts; see [`Plant::assemble`].
pub fn assemble(
    params: &PlantParams,
    gains: &ControllerGains,
    dc: &WeightedGraph,
    comm: Option<&WeightedGraph>,
    config: ControllerConfig,
) -> Result<ClosedLoopSystem, PlantError> {
    Ok(Plant::new(params.clone(), gains.clone(), dc.clone(), comm.cloned(), config)?.assemble())
}
