use super::{lu_solve, LinalgError, Matrix, MAX_DIM};

/// Solves the continuous Lyapunov equation `AᵀP + PA = -I`.
///
/// The equation is vectorized column-major, `(I⊗Aᵀ + Aᵀ⊗I) vec(P) = -vec(I)`,
/// and handed to [`lu_solve`]. A singular Kronecker operator (two eigenvalues
/// of `A` summing to zero) surfaces as `SingularMatrix`, which is how marginal
/// stability shows up to callers. The result is symmetrized.
pub fn lyapunov_solve(a: &Matrix) -> Result<Matrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if n > MAX_DIM {
        return Err(LinalgError::TooLarge { n, max: MAX_DIM });
    }
    let nn = n * n;
    let mut op = Matrix::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    for j in 0..n {
        for i in 0..n {
            let r = i + j * n;
            for k in 0..n {
                // (AᵀP)_ij = Σ_k A_ki P_kj
                op[(r, k + j * n)] += a[(k, i)];
                // (PA)_ij = Σ_k P_ik A_kj
                op[(r, i + k * n)] += a[(k, j)];
            }
            if i == j {
                rhs[r] = -1.0;
            }
        }
    }
    let vec_p = lu_solve(&op, &rhs)?;
    let mut p = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = vec_p[i + j * n];
        }
    }
    Ok(p.add(&p.transpose()).scale(0.5))
}

/// `AᵀP + PA + I`, the residual of [`lyapunov_solve`].
pub fn lyapunov_residual(a: &Matrix, p: &Matrix) -> Matrix {
    let atp = a.transpose().matmul(p);
    let pa = p.matmul(a);
    atp.add(&pa).add(&Matrix::identity(a.rows()))
}
