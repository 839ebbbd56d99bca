//! Small dense real-matrix kernels.
//!
//! Everything here works on row-major `f64` storage and is sized for the
//! closed-loop systems of a handful of converter terminals (n ≤ 64). There is
//! no sparse storage and no complex arithmetic; Hurwitz stability is certified
//! through the Lyapunov equation rather than a nonsymmetric eigensolver.

mod balance;
mod cholesky;
mod jacobi;
mod lu;
mod lyapunov;
mod matrix;

pub use balance::{balance, spectral_norm_estimate, Balanced};
pub use cholesky::{cholesky_pd_check, PdCheck};
pub use jacobi::{jacobi_sym_eig, SpectralResult};
pub use lu::{determinant, lu_solve, LuFactors};
pub use lyapunov::{lyapunov_residual, lyapunov_solve};
pub use matrix::Matrix;

use thiserror::Error;

/// Largest square dimension any kernel accepts.
pub const MAX_DIM: usize = 64;

/// Numerical thresholds shared by every kernel.
///
/// A single constant instance, [`TOLERANCES`], is used throughout so that
/// pass/fail decisions are identical on every platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceProfile {
    /// LU pivot magnitude below `lu_pivot * max|A|` is treated as singular.
    pub lu_pivot: f64,
    /// Relative asymmetry `max|S - Sᵀ| / max|S|` accepted as symmetric.
    pub symmetry: f64,
    /// Cholesky pivot must exceed `cholesky_pivot * trace(S) / n`.
    pub cholesky_pivot: f64,
    /// Jacobi stops when the off-diagonal Frobenius norm is below `jacobi_off * ‖S‖_F`.
    pub jacobi_off: f64,
    pub jacobi_max_sweeps: usize,
    /// Largest acceptable `‖AᵀP + PA + I‖_max` from the Lyapunov solver.
    pub lyapunov_residual: f64,
}

pub const TOLERANCES: ToleranceProfile = ToleranceProfile {
    lu_pivot: 1e-12,
    symmetry: 1e-10,
    cholesky_pivot: 1e-12,
    jacobi_off: 1e-12,
    jacobi_max_sweeps: 100,
    lyapunov_residual: 1e-7,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:.3e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dimension {n} exceeds the supported maximum of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
}
