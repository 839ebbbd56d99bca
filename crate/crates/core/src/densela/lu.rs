use super::{LinalgError, Matrix, TOLERANCES};

/// LU factorization with partial pivoting, `P A = L U`.
///
/// `L` (unit lower) and `U` share one buffer.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Matrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl LuFactors {
    /// Factors `a`, failing with `SingularMatrix` when a pivot falls below
    /// `1e-12 * max|A|`.
    pub fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let threshold = TOLERANCES.lu_pivot * a.max_abs();
        let (lu, perm, swaps) = eliminate(a, |column, pivot| {
            if !(pivot.abs() > threshold) {
                Err(LinalgError::SingularMatrix { column, pivot })
            } else {
                Ok(())
            }
        })?;
        Ok(Self { lu, perm, swaps })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }

    pub fn det(&self) -> f64 {
        let sign = if self.swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * self.lu.diagonal().iter().product::<f64>()
    }

    /// Smallest pivot magnitude encountered during elimination.
    pub fn min_pivot(&self) -> f64 {
        self.lu
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

fn eliminate(
    a: &Matrix,
    mut check_pivot: impl FnMut(usize, f64) -> Result<(), LinalgError>,
) -> Result<(Matrix, Vec<usize>, usize), LinalgError> {
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut swaps = 0;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[(i, k)]))
            .fold((k, 0.0_f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        check_pivot(k, pivot)?;
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            swaps += 1;
        }
        if pivot == 0.0 {
            continue;
        }
        for i in (k + 1)..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    let ukj = lu[(k, j)];
                    lu[(i, j)] -= factor * ukj;
                }
            }
        }
    }
    Ok((lu, perm, swaps))
}

/// Solves `A x = b` by partial-pivoting LU.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if a.is_square() && b.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            actual: b.len(),
        });
    }
    LuFactors::factor(a)?.solve(b)
}

/// Determinant by elimination, with no singularity threshold (returns 0 for
/// exactly singular input).
pub fn determinant(a: &Matrix) -> f64 {
    assert!(a.is_square(), "determinant of non-square matrix");
    let (lu, _, swaps) = eliminate(a, |_, _| Ok(())).expect("unchecked elimination");
    let sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
    sign * lu.diagonal().iter().product::<f64>()
}
