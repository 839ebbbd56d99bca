//! Equilibria, stability certificates, Lyapunov values and static error
//! bounds for the assembled closed loops.
//!
//! Stability is certified two ways. The strict certificate solves
//! `AᵀP + PA = -I` on a balanced copy of `A` and checks `P ≻ 0`; the
//! structural one checks that the gain matrix
//! `Q1 = [[K^ω(K^V)⁻¹(K^ω+K^droop), -K^ω], [-K^ω, K^V]]` is positive definite,
//! which makes the energy function `W` nonincreasing for any positive gains.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densela::{
    balance, cholesky_pd_check, jacobi_sym_eig, lu_solve, lyapunov_residual, lyapunov_solve,
    LinalgError, LuFactors, Matrix,
};
use crate::netgraph::WeightedGraph;
use crate::plant::{ClosedLoopSystem, ControllerConfig, ControllerGains, Plant, PlantError, PlantParams};
use crate::sim::Trajectory;

/// Relative drift over the tail window below which a trajectory is settled.
pub const CONVERGENCE_DRIFT: f64 = 1e-6;
/// Fraction of the stored samples that forms the tail window.
pub const TAIL_FRACTION: f64 = 0.1;

/// Largest `‖AᵀP + PA + I‖_F` for which `P ≻ 0` still proves `A` Hurwitz:
/// then `AᵀP + PA ≼ -(1 - 0.5) I`.
const CERTIFICATE_RESIDUAL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("closed-loop matrix of the {config:?} system is singular; no unique equilibrium")]
    SingularSystem { config: ControllerConfig },
    #[error("error bounds require identical k_omega, k_v and k_droop in every area")]
    NonUniformGains,
    #[error("trajectory has not settled: tail drift {drift:.3e} exceeds {threshold:.1e}")]
    NotConverged { drift: f64, threshold: f64 },
    #[error("trajectory too short for a tail window ({samples} samples)")]
    TrajectoryTooShort { samples: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Equilibrium in deviation coordinates.
    pub x0: Vec<f64>,
    /// `(1/n) 1ᵀω̂` at the equilibrium.
    pub omega_hat_avg: f64,
    /// `(1/n) 1ᵀV̂` at the equilibrium.
    pub v_hat_avg: f64,
    /// Asymptotic generation `P^gen` at the equilibrium.
    pub p_gen_asym: Vec<f64>,
    /// `‖A x0 + b‖_∞`.
    pub residual: f64,
}

/// Solves `A x0 = -b` with two steps of iterative refinement.
///
/// Rows are equilibrated first: entries range over many decades (DC rows
/// carry `1/C`, integrator rows carry `γ`), and singularity is judged per row
/// scale rather than against the largest entry of `A`.
pub fn equilibrium(sys: &ClosedLoopSystem) -> Result<EquilibriumReport, AnalysisError> {
    let dim = sys.dim();
    let row_scale: Vec<f64> = (0..dim)
        .map(|i| {
            let m = sys.a.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 { 1.0 / m } else { 1.0 }
        })
        .collect();
    let mut scaled = sys.a.clone();
    for (i, s) in row_scale.iter().enumerate() {
        for j in 0..dim {
            scaled[(i, j)] *= s;
        }
    }
    let lu = LuFactors::factor(&scaled).map_err(|e| match e {
        LinalgError::SingularMatrix { .. } => AnalysisError::SingularSystem { config: sys.config },
        other => other.into(),
    })?;
    let neg_b: Vec<f64> = sys.b.iter().zip(&row_scale).map(|(v, s)| -v * s).collect();
    let mut x = lu.solve(&neg_b)?;
    for _ in 0..2 {
        let ax = scaled.matvec(&x);
        let r: Vec<f64> = ax.iter().zip(&neg_b).map(|(a, nb)| nb - a).collect();
        let d = lu.solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
    }
    let residual = sys
        .a
        .matvec(&x)
        .iter()
        .zip(&sys.b)
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max);
    let n = sys.n as f64;
    let omega_hat_avg = x[sys.layout.omega()].iter().sum::<f64>() / n;
    let v_hat_avg = x[sys.layout.v()].iter().sum::<f64>() / n;
    Ok(EquilibriumReport {
        p_gen_asym: sys.p_gen(&x),
        x0: x,
        omega_hat_avg,
        v_hat_avg,
        residual,
    })
}

/// Equilibrium of `plant` under disturbance `p_m`, in its own layout.
///
/// For the complete-graph controller with `γ = 0` there is no equilibrium:
/// each `η_i` integrates its own frequency error and keeps drifting, and only
/// the average of the integrators settles. The averaged (projected) system is
/// solved instead and its `η'` copied into every integrator. Frequencies,
/// voltages, generation and `W` only see that average, so this state is their
/// limit.
pub fn equilibrium_state(plant: &Plant, p_m: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let mut sys = plant.assemble();
    sys.b = plant.forcing(p_m);
    match equilibrium(&sys) {
        Err(AnalysisError::SingularSystem { .. })
            if plant.config == ControllerConfig::SecondaryComplete =>
        {
            let proj = plant.with_config(ControllerConfig::SecondaryProjected)?;
            let mut psys = proj.assemble();
            psys.b = proj.forcing(p_m);
            let xp = equilibrium(&psys)?.x0;
            let n = plant.n();
            let mut x = xp[..2 * n].to_vec();
            x.extend(std::iter::repeat_n(xp[2 * n], n));
            Ok(x)
        }
        other => other.map(|r| r.x0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    /// Strict certificate: Lyapunov solve succeeded and `P ≻ 0`.
    pub hurwitz: bool,
    /// Smallest Cholesky pivot of `P` (0 when no `P` was found).
    pub lyap_p_min_pivot: f64,
    /// `Q1 ≻ 0`, the structural condition for `Ẇ ≤ 0`.
    pub q1_pd: bool,
    pub method_notes: String,
}

/// Strict Hurwitz test of a bare matrix; returns `(hurwitz, min pivot, note)`.
pub fn certify_matrix(a: &Matrix) -> (bool, f64, String) {
    // Balancing is a similarity, so P for the balanced matrix certifies A.
    let bal = balance(a);
    match lyapunov_solve(&bal.matrix) {
        Ok(p) => {
            let residual = lyapunov_residual(&bal.matrix, &p).frobenius();
            match cholesky_pd_check(&p) {
                Ok(chk) if chk.is_pd && residual <= CERTIFICATE_RESIDUAL => (
                    true,
                    chk.min_pivot,
                    format!("Lyapunov solution positive definite (residual {residual:.2e})"),
                ),
                Ok(chk) if chk.is_pd => (
                    false,
                    chk.min_pivot,
                    format!("Lyapunov residual {residual:.2e} too large to certify"),
                ),
                Ok(chk) => (
                    false,
                    chk.min_pivot,
                    "Lyapunov solution is not positive definite".to_string(),
                ),
                Err(e) => (false, 0.0, format!("Lyapunov solution rejected: {e}")),
            }
        }
        Err(LinalgError::SingularMatrix { .. }) => (
            false,
            0.0,
            "Lyapunov equation singular: eigenvalues on or symmetric about the imaginary axis"
                .to_string(),
        ),
        Err(e) => (false, 0.0, format!("Lyapunov solve failed: {e}")),
    }
}

/// The block gain matrix `Q1` (2n × 2n) of the energy-function derivative.
pub fn q1_matrix(gains: &ControllerGains) -> Matrix {
    let n = gains.k_omega.len();
    let mut q = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (kw, kv, kd) = (gains.k_omega[i], gains.k_v[i], gains.k_droop[i]);
        q[(i, i)] = kw / kv * (kw + kd);
        q[(i, n + i)] = -kw;
        q[(n + i, i)] = -kw;
        q[(n + i, n + i)] = kv;
    }
    q
}

/// Cholesky test of `D S D` with `D = diag(S)^{-1/2}`.
///
/// Definiteness is invariant under congruence, and the unit diagonal keeps the
/// relative pivot threshold meaningful when gains span many decades.
pub fn congruence_scaled_pd(s: &Matrix) -> bool {
    let d = s.diagonal();
    if d.iter().any(|v| !(*v > 0.0)) {
        return false;
    }
    let inv: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut scaled = s.clone();
    for i in 0..s.rows() {
        for j in 0..s.cols() {
            scaled[(i, j)] *= inv[i] * inv[j];
        }
    }
    cholesky_pd_check(&scaled).map(|c| c.is_pd).unwrap_or(false)
}

pub fn certify_stability(sys: &ClosedLoopSystem) -> StabilityCertificate {
    let (hurwitz, pivot, mut notes) = certify_matrix(&sys.a);

    let g = &sys.gains;
    let schur_ok = (0..sys.n).all(|i| g.k_omega[i] / g.k_v[i] * g.k_droop[i] > 0.0);
    let chol_ok = congruence_scaled_pd(&q1_matrix(g));
    let q1_pd = schur_ok && chol_ok;
    if schur_ok != chol_ok {
        notes.push_str("; Q1 Cholesky and Schur-complement checks disagree");
    }
    let marginal = sys.config == ControllerConfig::SecondaryComplete && g.gamma == 0.0;
    if marginal && !hurwitz {
        notes.push_str(
            "; gamma = 0 leaves the integrator differences undamped (zero eigenvalues): \
             frequencies and voltages still converge by LaSalle invariance since Q1 is positive definite",
        );
    }
    StabilityCertificate {
        hurwitz,
        lyap_p_min_pivot: pivot,
        q1_pd,
        method_notes: notes,
    }
}

/// Weight `Ω` of the energy function `W = ½ x̄ᵀ Ω x̄` for a configuration.
///
/// Frequencies are weighted by `K^ω (K^V)⁻¹ m`, voltages by `V^nom C`. The
/// integrator weight is chosen so that the `ω`–`η` cross terms cancel: the
/// identity for the distributed controller, `n` for the averaged integrator,
/// and `(1/n) 1 1ᵀ` for the complete-graph controller (which only sees the
/// average of its integrators).
pub fn lyapunov_weight(
    params: &PlantParams,
    gains: &ControllerGains,
    config: ControllerConfig,
) -> Matrix {
    let n = params.n;
    let dim = 2 * n + config.eta_len(n);
    let mut w = Matrix::zeros(dim, dim);
    for i in 0..n {
        w[(i, i)] = gains.k_omega[i] / gains.k_v[i] * params.m[i];
        w[(n + i, n + i)] = params.v_nom * params.cap[i];
    }
    let e = 2 * n;
    match config {
        ControllerConfig::DroopOnly => {}
        ControllerConfig::SecondaryProjected => w[(e, e)] = n as f64,
        ControllerConfig::SecondaryDistributed => {
            for i in 0..n {
                w[(e + i, e + i)] = 1.0;
            }
        }
        ControllerConfig::SecondaryComplete => {
            for i in 0..n {
                for j in 0..n {
                    w[(e + i, e + j)] = 1.0 / n as f64;
                }
            }
        }
    }
    w
}

/// `½ x̄ᵀ Ω x̄` for a quadratic weight.
pub fn quadratic_value(weight: &Matrix, x_bar: &[f64]) -> f64 {
    let wx = weight.matvec(x_bar);
    0.5 * wx.iter().zip(x_bar).map(|(a, b)| a * b).sum::<f64>()
}

/// Energy function `W` at a state given relative to the equilibrium.
pub fn lyapunov_value(
    x_bar: &[f64],
    params: &PlantParams,
    gains: &ControllerGains,
    config: ControllerConfig,
) -> f64 {
    quadratic_value(&lyapunov_weight(params, gains, config), x_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundVariant {
    Decentralized,
    Distributed,
}

/// Static error bounds on generation sharing, voltages and frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub variant: BoundVariant,
    pub e_gen: f64,
    pub e_v: f64,
    pub e_omega: f64,
    /// Closed-form `e^V_dec - e^V_dist = k^ω/(n k^droop k^V) |Σ P^m|`.
    pub delta_e_v: f64,
    /// Closed-form `e^ω_dec - e^ω_dist = 1/(n k^droop) |Σ P^m|`.
    pub delta_e_omega: f64,
}

struct BoundTerms {
    kw: f64,
    kv: f64,
    kd: f64,
    n: f64,
    /// `Σ_{i≥2} 1/λ_i(L_R)`.
    inv_eig_sum: f64,
    p_max: f64,
    p_sum: f64,
    v_nom: f64,
}

impl BoundTerms {
    fn new(params: &PlantParams, gains: &ControllerGains, dc: &WeightedGraph) -> Result<Self, AnalysisError> {
        let (kw, kv, kd) = gains.uniform_scalars().ok_or(AnalysisError::NonUniformGains)?;
        let eig = jacobi_sym_eig(&dc.laplacian())?;
        let inv_eig_sum = eig.eigenvalues.iter().skip(1).map(|l| 1.0 / l).sum();
        Ok(Self {
            kw,
            kv,
            kd,
            n: params.n as f64,
            inv_eig_sum,
            p_max: params.p_m.iter().fold(0.0, |m, p| m.max(p.abs())),
            p_sum: params.p_m.iter().sum::<f64>().abs(),
            v_nom: params.v_nom,
        })
    }

    /// `(n-1) + (k^V/V^nom) Σ 1/λ_i`.
    fn spread(&self) -> f64 {
        (self.n - 1.0) + self.kv / self.v_nom * self.inv_eig_sum
    }

    fn e_gen(&self) -> f64 {
        self.kd * self.p_max / (self.kd + self.kw) * self.spread()
    }

    fn e_v_dist(&self) -> f64 {
        self.kw * self.p_max / ((self.kd + self.kw) * self.v_nom) * self.inv_eig_sum
    }

    fn e_omega_dist(&self) -> f64 {
        self.p_max / (self.kd + self.kw) * self.spread()
    }

    fn delta_v(&self) -> f64 {
        self.kw / (self.n * self.kd * self.kv) * self.p_sum
    }

    fn delta_omega(&self) -> f64 {
        self.p_sum / (self.n * self.kd)
    }
}

/// Bounds met by decentralized droop control.
pub fn bounds_decentralized(
    params: &PlantParams,
    gains: &ControllerGains,
    dc: &WeightedGraph,
) -> Result<BoundSet, AnalysisError> {
    let t = BoundTerms::new(params, gains, dc)?;
    Ok(BoundSet {
        variant: BoundVariant::Decentralized,
        e_gen: t.e_gen(),
        e_v: t.delta_v() + t.e_v_dist(),
        e_omega: t.delta_omega() + t.e_omega_dist(),
        delta_e_v: t.delta_v(),
        delta_e_omega: t.delta_omega(),
    })
}

/// Bounds met by secondary control in the limits `γ → 0⁺` / `δ → ∞`.
pub fn bounds_distributed(
    params: &PlantParams,
    gains: &ControllerGains,
    dc: &WeightedGraph,
) -> Result<BoundSet, AnalysisError> {
    let t = BoundTerms::new(params, gains, dc)?;
    Ok(BoundSet {
        variant: BoundVariant::Distributed,
        e_gen: t.e_gen(),
        e_v: t.e_v_dist(),
        e_omega: t.e_omega_dist(),
        delta_e_v: t.delta_v(),
        delta_e_omega: t.delta_omega(),
    })
}

/// Tail-window errors of one area against the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaMargin {
    pub gen_error: f64,
    pub v_error: f64,
    pub omega_error: f64,
    /// Bound minus error; negative means violated.
    pub gen_margin: f64,
    pub v_margin: f64,
    pub omega_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVerdict {
    pub pass: bool,
    pub variant: BoundVariant,
    /// Largest tail drift over all output channels.
    pub drift: f64,
    pub areas: Vec<AreaMargin>,
}

/// Largest `|y(t) - y(t_end)|` over the last 10% of samples, taken over
/// every frequency, voltage and generation channel.
pub fn tail_drift(traj: &Trajectory) -> Result<f64, AnalysisError> {
    let (start, last) = tail_window(traj)?;
    let mut drift: f64 = 0.0;
    for k in start..=last {
        for (a, b) in [
            (traj.omega(k), traj.omega(last)),
            (traj.v(k), traj.v(last)),
            (traj.p_gen(k), traj.p_gen(last)),
        ] {
            for (x, y) in a.iter().zip(b) {
                drift = drift.max((x - y).abs());
            }
        }
    }
    Ok(drift)
}

fn tail_window(traj: &Trajectory) -> Result<(usize, usize), AnalysisError> {
    let len = traj.len();
    if len < 10 {
        return Err(AnalysisError::TrajectoryTooShort { samples: len });
    }
    let tail = ((len as f64 * TAIL_FRACTION).ceil() as usize).max(2);
    Ok((len - tail, len - 1))
}

/// Checks the tail of a settled trajectory against a bound set.
///
/// Errors are the worst values over the tail window; the generation error is
/// measured against the fair share `-(1/n) Σ P^m` of the final disturbance.
pub fn verify_objective(
    traj: &Trajectory,
    bounds: &BoundSet,
    params: &PlantParams,
) -> Result<ObjectiveVerdict, AnalysisError> {
    let drift = tail_drift(traj)?;
    if !(drift < CONVERGENCE_DRIFT) {
        return Err(AnalysisError::NotConverged {
            drift,
            threshold: CONVERGENCE_DRIFT,
        });
    }
    tail_margins(traj, bounds, params)
}

/// Worst tail-window errors against `bounds`, without requiring the tail to
/// have settled. [`verify_objective`] is this plus the drift gate.
pub fn tail_margins(
    traj: &Trajectory,
    bounds: &BoundSet,
    params: &PlantParams,
) -> Result<ObjectiveVerdict, AnalysisError> {
    let drift = tail_drift(traj)?;
    let (start, last) = tail_window(traj)?;
    let n = params.n;
    let share = traj.p_m_final.iter().sum::<f64>() / n as f64;
    let mut areas = Vec::with_capacity(n);
    for i in 0..n {
        let mut gen_error: f64 = 0.0;
        let mut v_error: f64 = 0.0;
        let mut omega_error: f64 = 0.0;
        for k in start..=last {
            gen_error = gen_error.max((traj.p_gen(k)[i] + share).abs());
            v_error = v_error.max((traj.v(k)[i] - params.v_ref[i]).abs());
            omega_error = omega_error.max((traj.omega(k)[i] - params.omega_ref).abs());
        }
        areas.push(AreaMargin {
            gen_error,
            v_error,
            omega_error,
            gen_margin: bounds.e_gen - gen_error,
            v_margin: bounds.e_v - v_error,
            omega_margin: bounds.e_omega - omega_error,
        });
    }
    let pass = areas
        .iter()
        .all(|a| a.gen_margin >= 0.0 && a.v_margin >= 0.0 && a.omega_margin >= 0.0);
    Ok(ObjectiveVerdict {
        pass,
        variant: bounds.variant,
        drift,
        areas,
    })
}

/// Checks `|P^gen_i + (1/n)ΣP^m|`, `|V̂_i|`, `|ω̂_i|` of an equilibrium against bounds.
pub fn equilibrium_within_bounds(
    sys: &ClosedLoopSystem,
    x0: &[f64],
    p_m: &[f64],
    bounds: &BoundSet,
) -> bool {
    let share = p_m.iter().sum::<f64>() / sys.n as f64;
    let gen_ok = sys.p_gen(x0).iter().all(|p| (p + share).abs() <= bounds.e_gen);
    let v_ok = x0[sys.layout.v()].iter().all(|v| v.abs() <= bounds.e_v);
    let w_ok = x0[sys.layout.omega()].iter().all(|w| w.abs() <= bounds.e_omega);
    gen_ok && v_ok && w_ok
}

/// Solves `A x = -b` without refinement, for callers wanting a quick oracle.
pub fn plain_solve(sys: &ClosedLoopSystem) -> Result<Vec<f64>, AnalysisError> {
    let neg_b: Vec<f64> = sys.b.iter().map(|v| -v).collect();
    Ok(lu_solve(&sys.a, &neg_b)?)
}
