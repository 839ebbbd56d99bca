use super::{LinalgError, Matrix, MAX_DIM, TOLERANCES};

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps rotate away every off-diagonal pair until the off-diagonal
/// Frobenius norm drops below `1e-12 * ‖S‖_F`.
pub fn jacobi_sym_eig(s: &Matrix) -> Result<SpectralResult, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let n = s.rows();
    if n > MAX_DIM {
        return Err(LinalgError::TooLarge { n, max: MAX_DIM });
    }
    let asymmetry = s.relative_asymmetry();
    if asymmetry > TOLERANCES.symmetry {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }

    // work on the exactly symmetric part
    let mut a = s.add(&s.transpose()).scale(0.5);
    let mut v = Matrix::identity(n);
    let target = TOLERANCES.jacobi_off * a.frobenius();

    let mut converged = off_diagonal_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == TOLERANCES.jacobi_max_sweeps {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        converged = off_diagonal_norm(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&k| a[(k, k)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[(i, col)] = v[(i, k)];
        }
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_decomposition(s: &Matrix, r: &SpectralResult) {
        let n = s.rows();
        let v = &r.eigenvectors;
        let vtv = v.transpose().matmul(v);
        assert!(vtv.sub(&Matrix::identity(n)).max_abs() <= 1e-10);
        let back = v.matmul(&Matrix::from_diag(&r.eigenvalues)).matmul(&v.transpose());
        assert!(back.sub(s).max_abs() <= 1e-9, "reconstruction {:?}", back.sub(s));
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn two_node_laplacian() {
        let s = Matrix::from_rows(&[&[10.0, -10.0], &[-10.0, 10.0]]);
        let r = jacobi_sym_eig(&s).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-12);
        assert!((r.eigenvalues[1] - 20.0).abs() < 1e-12);
        check_decomposition(&s, &r);
    }

    #[test]
    fn diagonal_is_sorted() {
        let s = Matrix::from_diag(&[5.0, 1.0, 3.0]);
        let r = jacobi_sym_eig(&s).unwrap();
        assert_eq!(r.eigenvalues, vec![1.0, 3.0, 5.0]);
        check_decomposition(&s, &r);
    }

    #[test]
    fn rejects_asymmetric() {
        let s = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(
            jacobi_sym_eig(&s),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    fn symmetric(n: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |data| {
            let m = Matrix::from_row_major(n, n, data).unwrap();
            m.add(&m.transpose()).scale(0.5)
        })
    }

    proptest! {
        #[test]
        fn sum_of_eigenvalues_is_trace(s in (1usize..10).prop_flat_map(symmetric)) {
            let r = jacobi_sym_eig(&s).unwrap();
            let sum: f64 = r.eigenvalues.iter().sum();
            let scale = s.frobenius().max(1.0);
            prop_assert!((sum - s.trace()).abs() <= 1e-10 * scale);
            check_decomposition(&s, &r);
        }
    }
}
