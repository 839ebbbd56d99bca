use serde::{Deserialize, Serialize};

use super::ScenarioFile;
use crate::analysis::{BoundSet, EquilibriumReport, ObjectiveVerdict, StabilityCertificate};

/// Everything a command found out about one scenario, as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    /// The scenario as run (after command-line overrides).
    pub scenario: ScenarioFile,
    /// `P^m` after all events; equilibrium and bounds refer to it.
    pub disturbance: Vec<f64>,
    pub stability: StabilityCertificate,
    pub equilibrium: Option<EquilibriumReport>,
    /// Leak ladder evaluated when the equilibrium is singular.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_ladder: Vec<LadderPoint>,
    pub bounds: BoundsReport,
    pub simulation: Option<SimulationSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub decentralized: Option<BoundSet>,
    pub distributed: Option<BoundSet>,
    /// Why bounds are missing, if they are.
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub gamma: f64,
    /// Average integrator state at the equilibrium.
    pub eta_avg: f64,
    /// `1ᵀω̂` at the equilibrium.
    pub omega_hat_sum: f64,
    /// `1ᵀV̂` at the equilibrium.
    pub v_hat_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub samples: usize,
    pub substeps: usize,
    pub step: f64,
    /// Norm estimate used for the step-size rule.
    pub rho: f64,
    pub step_warning: bool,
    pub tail_drift: f64,
    pub final_omega: Vec<f64>,
    pub final_v: Vec<f64>,
    pub final_p_gen: Vec<f64>,
    pub verdict: Option<ObjectiveVerdict>,
    pub verdict_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}
