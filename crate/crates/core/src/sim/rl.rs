//! DC lines with series inductance.
//!
//! Each line `e = (i, j)` carries a current deviation `Î_e` with
//! `L_e İ_e = V̂_i - V̂_j - R_e Î_e`, and node `i` sees `C_i V̂̇_i = -(B Î)_i + …`
//! in place of the resistive Laplacian term. Line shunt capacitance is lumped
//! half into each end terminal.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::analysis::lyapunov_weight;
use crate::densela::Matrix;
use crate::netgraph::WeightedGraph;
use crate::plant::{ClosedLoopSystem, Plant, StateBlock, StateLayout};

/// Inductance and shunt capacitance of one DC line (p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineRl {
    pub l: f64,
    pub c: f64,
}

/// Closed loop with line currents appended to the state.
#[derive(Debug, Clone)]
pub struct RlSystem {
    pub sys: ClosedLoopSystem,
    /// Energy weight: the resistive-model weight (with lumped capacitances)
    /// plus `V^nom L_e` on each line current.
    pub weight: Matrix,
    /// The plant with line capacitance lumped into the terminals.
    pub lumped: Plant,
}

fn check_lines(dc: &WeightedGraph, lines: &[LineRl]) -> Result<(), SimError> {
    if lines.len() != dc.edges().len() {
        return Err(SimError::Invalid(format!(
            "RL mode needs inductance data for all {} lines, got {}",
            dc.edges().len(),
            lines.len()
        )));
    }
    for (e, line) in dc.edges().iter().zip(lines) {
        if !(line.l > 0.0 && line.l.is_finite()) {
            return Err(SimError::Invalid(format!(
                "line ({}, {}) needs inductance > 0, got {}",
                e.i + 1,
                e.j + 1,
                line.l
            )));
        }
        if !(line.c >= 0.0 && line.c.is_finite()) {
            return Err(SimError::Invalid(format!(
                "line ({}, {}) needs capacitance >= 0, got {}",
                e.i + 1,
                e.j + 1,
                line.c
            )));
        }
    }
    Ok(())
}

/// Terminal capacitances with half of each line's shunt capacitance added.
pub fn lumped_capacitance(base: &[f64], dc: &WeightedGraph, lines: &[LineRl]) -> Vec<f64> {
    let mut cap = base.to_vec();
    for (e, line) in dc.edges().iter().zip(lines) {
        cap[e.i] += 0.5 * line.c;
        cap[e.j] += 0.5 * line.c;
    }
    cap
}

pub fn assemble_rl(plant: &Plant, lines: &[LineRl]) -> Result<RlSystem, SimError> {
    check_lines(&plant.dc, lines)?;
    let mut lumped = plant.clone();
    lumped.params.cap = lumped_capacitance(&plant.params.cap, &plant.dc, lines);
    let base = lumped.assemble();
    let n = plant.n();
    let edges = plant.dc.edges();
    let ne = edges.len();
    let dim0 = base.dim();
    let dim = dim0 + ne;
    let vr = base.layout.v();
    let l_r = plant.dc.laplacian();
    let cap = &lumped.params.cap;

    let mut a = Matrix::zeros(dim, dim);
    a.set_block(0, 0, &base.a);
    // the node equations see line currents instead of the resistive Laplacian
    for i in 0..n {
        for j in 0..n {
            a[(vr.start + i, vr.start + j)] += l_r[(i, j)] / cap[i];
        }
    }
    for (k, (e, line)) in edges.iter().zip(lines).enumerate() {
        let col = dim0 + k;
        a[(vr.start + e.i, col)] = -1.0 / cap[e.i];
        a[(vr.start + e.j, col)] = 1.0 / cap[e.j];
        a[(col, vr.start + e.i)] = 1.0 / line.l;
        a[(col, vr.start + e.j)] = -1.0 / line.l;
        a[(col, col)] = -(1.0 / e.weight) / line.l;
    }

    let mut blocks = base.layout.blocks().to_vec();
    blocks.push(StateBlock::LineCurrent(ne));
    let mut b = base.b.clone();
    b.resize(dim, 0.0);
    let mut p_gen_map = Matrix::zeros(n, dim);
    p_gen_map.set_block(0, 0, &base.p_gen_map);

    let w0 = lyapunov_weight(&lumped.params, &lumped.gains, lumped.config);
    let mut weight = Matrix::zeros(dim, dim);
    weight.set_block(0, 0, &w0);
    for (k, line) in lines.iter().enumerate() {
        weight[(dim0 + k, dim0 + k)] = plant.params.v_nom * line.l;
    }

    Ok(RlSystem {
        sys: ClosedLoopSystem {
            config: base.config,
            n,
            a,
            b,
            layout: StateLayout::new(blocks),
            p_gen_map,
            gains: base.gains,
        },
        weight,
        lumped,
    })
}

/// The bare RLC network `[V̂, Î]` with converters disconnected.
pub fn passive_network(dc: &WeightedGraph, cap: &[f64], lines: &[LineRl]) -> Result<Matrix, SimError> {
    check_lines(dc, lines)?;
    let n = dc.n();
    let ne = lines.len();
    let cap = lumped_capacitance(cap, dc, lines);
    let mut a = Matrix::zeros(n + ne, n + ne);
    for (k, (e, line)) in dc.edges().iter().zip(lines).enumerate() {
        a[(e.i, n + k)] = -1.0 / cap[e.i];
        a[(e.j, n + k)] = 1.0 / cap[e.j];
        a[(n + k, e.i)] = 1.0 / line.l;
        a[(n + k, e.j)] = -1.0 / line.l;
        a[(n + k, n + k)] = -(1.0 / e.weight) / line.l;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{equilibrium, quadratic_value};
    use crate::densela::jacobi_sym_eig;
    use crate::netgraph::GraphKind;
    use crate::plant::{ControllerConfig, ControllerGains, PlantParams};
    use crate::sim::propagator::AffineMap;

    fn triangle() -> (WeightedGraph, Vec<LineRl>) {
        let dc = WeightedGraph::dc_from_resistances(3, [(0, 1, 0.0586), (1, 2, 0.0878), (0, 2, 0.0732)])
            .unwrap();
        let lines = vec![
            LineRl { l: 0.256e-3, c: 0.0085 },
            LineRl { l: 0.384e-3, c: 0.0127 },
            LineRl { l: 0.32e-3, c: 0.0106 },
        ];
        (dc, lines)
    }

    fn plant(config: ControllerConfig) -> Plant {
        let (dc, _) = triangle();
        let params = PlantParams::uniform(3).with_p_m(vec![-0.2, 0.05, 0.0]);
        let comm = WeightedGraph::new(3, GraphKind::Comm, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        Plant::new(params, ControllerGains::benchmark(3), dc, Some(comm), config).unwrap()
    }

    #[test]
    fn steady_state_matches_resistive_model() {
        let (_, lines) = triangle();
        for config in [ControllerConfig::DroopOnly, ControllerConfig::SecondaryDistributed] {
            let p = plant(config);
            let res = equilibrium(&p.assemble()).unwrap();
            let rl = assemble_rl(&p, &lines).unwrap();
            let eq = equilibrium(&rl.sys).unwrap();
            let k = res.x0.len();
            for (u, w) in eq.x0[..k].iter().zip(&res.x0) {
                assert!((u - w).abs() < 1e-9);
            }
            // inductor currents carry the voltage differences over R
            for (idx, e) in p.dc.edges().iter().enumerate() {
                let dv = res.x0[p.n() + e.i] - res.x0[p.n() + e.j];
                assert!((eq.x0[k + idx] - dv * e.weight).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weight_dissipates_with_lines() {
        let (_, lines) = triangle();
        let rl = assemble_rl(&plant(ControllerConfig::SecondaryDistributed), &lines).unwrap();
        let s = rl.weight.matmul(&rl.sys.a);
        let sym = s.add(&s.transpose()).scale(-1.0);
        let eig = jacobi_sym_eig(&sym).unwrap();
        assert!(eig.eigenvalues[0] >= -1e-9 * sym.max_abs());
    }

    #[test]
    fn passive_network_energy_decreases() {
        let (dc, lines) = triangle();
        let cap = vec![0.375e-3; 3];
        let a = passive_network(&dc, &cap, &lines).unwrap();
        let lumped = lumped_capacitance(&cap, &dc, &lines);
        let mut diag: Vec<f64> = lumped.clone();
        diag.extend(lines.iter().map(|l| l.l));
        let energy = Matrix::from_diag(&diag);
        let map = AffineMap::rk4_step(&a, 1e-6);
        let zero = vec![0.0; 6];
        let mut x = vec![0.05, -0.02, 0.01, 0.3, -0.1, 0.2];
        let mut e_prev = quadratic_value(&energy, &x);
        let mut next = vec![0.0; 6];
        for _ in 0..20_000 {
            map.apply(&x, &zero, &mut next);
            std::mem::swap(&mut x, &mut next);
            let e = quadratic_value(&energy, &x);
            assert!(e <= e_prev + 1e-15, "{e} > {e_prev}");
            e_prev = e;
        }
    }

    #[test]
    fn rejects_missing_inductance() {
        let (_, mut lines) = triangle();
        lines[1].l = 0.0;
        assert!(assemble_rl(&plant(ControllerConfig::DroopOnly), &lines).is_err());
        assert!(assemble_rl(&plant(ControllerConfig::DroopOnly), &lines[..2]).is_err());
    }
}
