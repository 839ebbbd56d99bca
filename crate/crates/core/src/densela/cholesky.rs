use super::{LinalgError, Matrix, TOLERANCES};

#[derive(Debug, Clone, PartialEq)]
pub struct PdCheck {
    pub is_pd: bool,
    /// Lower-triangular `L` with `S = L Lᵀ`, present only when `is_pd`.
    pub factor: Option<Matrix>,
    /// Smallest Cholesky pivot (`L_kk²`) reached before stopping.
    pub min_pivot: f64,
}

/// Positive-definiteness test by Cholesky factorization.
///
/// A pivot at or below `1e-12 * trace(S) / n` counts as a failure, so
/// numerically semidefinite matrices are reported as not PD.
pub fn cholesky_pd_check(s: &Matrix) -> Result<PdCheck, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let asymmetry = s.relative_asymmetry();
    if asymmetry > TOLERANCES.symmetry {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    let n = s.rows();
    if n == 0 {
        return Ok(PdCheck {
            is_pd: false,
            factor: None,
            min_pivot: 0.0,
        });
    }
    let threshold = TOLERANCES.cholesky_pivot * (s.trace() / n as f64).abs();
    let mut l = Matrix::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        min_pivot = min_pivot.min(d);
        if !(d > threshold) {
            return Ok(PdCheck {
                is_pd: false,
                factor: None,
                min_pivot,
            });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(PdCheck {
        is_pd: true,
        factor: Some(l),
        min_pivot,
    })
}
