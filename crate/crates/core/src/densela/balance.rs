use super::Matrix;

/// Diagonal similarity `D⁻¹ A D` with row/column norms equalized.
#[derive(Debug, Clone)]
pub struct Balanced {
    pub matrix: Matrix,
    /// Diagonal of `D`; powers of two, so the transform is exact.
    pub scale: Vec<f64>,
}

/// Osborne balancing (radix-2 scaling, diagonal ignored).
///
/// The spectrum is unchanged, but the norm of the result can be orders of
/// magnitude smaller than `‖A‖` when state blocks have very different units.
pub fn balance(a: &Matrix) -> Balanced {
    assert!(a.is_square(), "balance of non-square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let mut scale = vec![1.0; n];
    const RADIX: f64 = 2.0;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut c2 = c;
            let mut r2 = r;
            while c2 < r2 / RADIX {
                c2 *= RADIX;
                r2 /= RADIX;
                f *= RADIX;
            }
            while c2 >= r2 * RADIX {
                c2 /= RADIX;
                r2 *= RADIX;
                f /= RADIX;
            }
            if (c2 + r2) < 0.95 * s {
                done = false;
                scale[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
    Balanced { matrix: m, scale }
}

/// Power-iteration estimate of `‖A‖₂` (largest singular value).
pub fn spectral_norm_estimate(a: &Matrix) -> f64 {
    let n = a.cols();
    if n == 0 || a.max_abs() == 0.0 {
        return 0.0;
    }
    let ata = a.transpose().matmul(a);
    // fixed, slightly irregular start vector keeps the result deterministic
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 % 11) as f64)).collect();
    normalize(&mut x);
    let mut estimate = 0.0;
    for _ in 0..500 {
        let y = ata.matvec(&x);
        let lambda: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        x = y;
        if normalize(&mut x) == 0.0 {
            break;
        }
        let converged = (lambda - estimate).abs() <= 1e-12 * lambda.abs();
        estimate = lambda;
        if converged {
            break;
        }
    }
    estimate.max(0.0).sqrt()
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}
