use crate::densela::{balance, spectral_norm_estimate, Matrix};

/// Largest `h·ρ̂` accepted without a warning.
pub const STEP_NORM_LIMIT: f64 = 0.1;

/// Exact one-sample map of fixed-step RK4 on `ẋ = A x + b`:
/// `x⁺ = Φ x + Γ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub phi: Matrix,
    pub gamma: Matrix,
}

impl AffineMap {
    /// One classical RK4 step of length `h`:
    /// `Φ = I + Z + Z²/2 + Z³/6 + Z⁴/24`, `Γ = h (I + Z/2 + Z²/6 + Z³/24)`, `Z = hA`.
    pub fn rk4_step(a: &Matrix, h: f64) -> Self {
        let n = a.rows();
        let z = a.scale(h);
        let z2 = z.matmul(&z);
        let z3 = z2.matmul(&z);
        let z4 = z3.matmul(&z);
        let id = Matrix::identity(n);
        let phi = id
            .add(&z)
            .add(&z2.scale(0.5))
            .add(&z3.scale(1.0 / 6.0))
            .add(&z4.scale(1.0 / 24.0));
        let s = id
            .add(&z.scale(0.5))
            .add(&z2.scale(1.0 / 6.0))
            .add(&z3.scale(1.0 / 24.0));
        Self {
            phi,
            gamma: s.scale(h),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            phi: next.phi.matmul(&self.phi),
            gamma: next.phi.matmul(&self.gamma).add(&next.gamma),
        }
    }

    /// `self` applied `k ≥ 1` times, by binary powering.
    pub fn power(&self, k: usize) -> AffineMap {
        assert!(k >= 1, "map power must be positive");
        let mut base = self.clone();
        let mut acc: Option<AffineMap> = None;
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(m) => m.then(&base),
                });
            }
            k >>= 1;
            if k > 0 {
                base = base.then(&base);
            }
        }
        acc.expect("k >= 1")
    }

    pub fn apply(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        self.phi.matvec_into(x, out);
        let n = out.len();
        for i in 0..n {
            let row = self.gamma.row(i);
            out[i] += row.iter().zip(b).map(|(g, v)| g * v).sum::<f64>();
        }
    }
}

/// Substep choice for one output sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub substeps: usize,
    /// Integration step `dt / substeps`.
    pub h: f64,
    /// Norm estimate of the balanced system matrix.
    pub rho: f64,
    /// Set when a forced substep count violates `h·ρ̂ ≤ 0.1`.
    pub warning: bool,
}

/// Picks `substeps` so that `h·ρ̂ ≤ 0.1`, or checks a forced value.
///
/// `ρ̂` is measured on the balanced matrix: it bounds the spectral radius just
/// as `‖A‖₂` does, but without the spurious growth from mixing state blocks in
/// very different units.
pub fn plan_steps(a: &Matrix, dt: f64, forced: Option<usize>) -> StepPlan {
    let rho = spectral_norm_estimate(&balance(a).matrix);
    let auto = ((dt * rho / STEP_NORM_LIMIT) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let substeps = forced.unwrap_or(auto).max(1);
    let h = dt / substeps as f64;
    StepPlan {
        substeps,
        h,
        rho,
        warning: h * rho > STEP_NORM_LIMIT,
    }
}

/// One RK4 step of `ẋ = f(x)` with caller-provided scratch buffers.
pub fn rk4_step<E>(
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    x: &mut [f64],
    h: f64,
    scratch: &mut Rk4Scratch,
) -> Result<(), E> {
    let n = x.len();
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    f(x, k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(tmp, k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(tmp, k3)?;
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(tmp, k4)?;
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::convert::Infallible;

    fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        // shift left of the Gershgorin discs
        for i in 0..n {
            let r: f64 = (0..n).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] -= r + 0.1;
        }
        a
    }

    #[test]
    fn rk4_matches_truncated_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dt = 1e-3;
        for _ in 0..50 {
            let a = random_hurwitz(&mut rng, 4);
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = x0.clone();
            let mut scratch = Rk4Scratch::new(4);
            rk4_step(
                |y, dy| {
                    a.matvec_into(y, dy);
                    Ok::<(), Infallible>(())
                },
                &mut x,
                dt,
                &mut scratch,
            )
            .unwrap();
            // Σ_{k≤4} (A dt)^k / k! applied to x0, term by term
            let mut want = x0.clone();
            let mut term = x0.clone();
            for k in 1..=4 {
                term = a.matvec(&term).iter().map(|v| v * dt / k as f64).collect();
                for (w, t) in want.iter_mut().zip(&term) {
                    *w += t;
                }
            }
            for (u, w) in x.iter().zip(&want) {
                assert!((u - w).abs() <= 1e-12, "{u} vs {w}");
            }
        }
    }

    #[test]
    fn affine_map_matches_stepping() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_hurwitz(&mut rng, 5);
        let b: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 0.01;
        let k = 13;
        let map = AffineMap::rk4_step(&a, h).power(k);
        let mut x = vec![0.3; 5];
        let mut mapped = vec![0.0; 5];
        map.apply(&x, &b, &mut mapped);
        let mut scratch = Rk4Scratch::new(5);
        for _ in 0..k {
            rk4_step(
                |y, dy| {
                    a.matvec_into(y, dy);
                    for (d, bi) in dy.iter_mut().zip(&b) {
                        *d += bi;
                    }
                    Ok::<(), Infallible>(())
                },
                &mut x,
                h,
                &mut scratch,
            )
            .unwrap();
        }
        for (u, w) in mapped.iter().zip(&x) {
            assert!((u - w).abs() < 1e-13, "{u} vs {w}");
        }
    }

    #[test]
    fn step_plan_respects_limit() {
        let a = Matrix::from_diag(&[-1000.0, -1.0]);
        let plan = plan_steps(&a, 1e-3, None);
        assert!(plan.h * plan.rho <= STEP_NORM_LIMIT * (1.0 + 1e-12));
        assert_eq!(plan.substeps, 10);
        assert!(!plan.warning);
        let forced = plan_steps(&a, 1e-3, Some(1));
        assert!(forced.warning);
        assert_eq!(forced.substeps, 1);
    }
}
