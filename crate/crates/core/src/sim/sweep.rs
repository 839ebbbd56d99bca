use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Scenario, SimError};
use crate::analysis::{
    bounds_decentralized, bounds_distributed, equilibrium, equilibrium_within_bounds, BoundSet,
    EquilibriumReport,
};
use crate::plant::{ControllerConfig, ControllerGains, Plant};

/// Scalar parameter varied by [`sweep`]. Per-area gains are set uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    Gamma,
    KDroop,
    KDroopI,
    KOmega,
    KV,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "delta" => Self::Delta,
            "gamma" => Self::Gamma,
            "k_droop" => Self::KDroop,
            "k_droop_i" => Self::KDroopI,
            "k_omega" => Self::KOmega,
            "k_v" => Self::KV,
            _ => return None,
        })
    }

    fn apply(self, gains: &mut ControllerGains, value: f64) {
        match self {
            Self::Delta => gains.delta = value,
            Self::Gamma => gains.gamma = value,
            Self::KDroop => gains.k_droop.iter_mut().for_each(|k| *k = value),
            Self::KDroopI => gains.k_droop_i.iter_mut().for_each(|k| *k = value),
            Self::KOmega => gains.k_omega.iter_mut().for_each(|k| *k = value),
            Self::KV => gains.k_v.iter_mut().for_each(|k| *k = value),
        }
    }
}

/// Equilibrium of one sweep point and its check against the matching bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub equilibrium: EquilibriumReport,
    /// Decentralized bounds for droop, distributed bounds otherwise; `None`
    /// when gains are not uniform.
    pub bounds: Option<BoundSet>,
    pub within_bounds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub value: f64,
    pub result: Result<SweepOutcome, SimError>,
}

fn evaluate(base: &Scenario, param: SweepParam, value: f64) -> Result<SweepOutcome, SimError> {
    let p = &base.plant;
    let mut gains = p.gains.clone();
    param.apply(&mut gains, value);
    // disturbance after all events, as the equilibrium is the long-run state
    let mut params = p.params.clone();
    for e in &base.events {
        params.p_m[e.area] += e.dp_m;
    }
    let plant = Plant::new(params, gains, p.dc.clone(), p.comm.clone(), p.config)?;
    let sys = plant.assemble();
    let equilibrium = equilibrium(&sys)?;
    let bounds = if plant.config == ControllerConfig::DroopOnly {
        bounds_decentralized(&plant.params, &plant.gains, &plant.dc)
    } else {
        bounds_distributed(&plant.params, &plant.gains, &plant.dc)
    }
    .ok();
    let within_bounds = bounds
        .as_ref()
        .map(|b| equilibrium_within_bounds(&sys, &equilibrium.x0, &plant.params.p_m, b));
    Ok(SweepOutcome {
        equilibrium,
        bounds,
        within_bounds,
    })
}

/// Evaluates the post-event equilibrium for each parameter value.
///
/// Entries are computed in parallel and returned in input order; a failing
/// value yields an error entry without affecting the others.
pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64]) -> Result<Vec<SweepEntry>, SimError> {
    if values.is_empty() {
        return Err(SimError::Invalid("sweep needs at least one value".into()));
    }
    Ok(values
        .par_iter()
        .map(|&value| SweepEntry {
            value,
            result: evaluate(base, param, value),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{GraphKind, WeightedGraph};
    use crate::plant::PlantParams;
    use crate::sim::Event;

    fn base(config: ControllerConfig) -> Scenario {
        let dc = WeightedGraph::dc_from_resistances(4, [(0, 1, 0.06), (1, 2, 0.09), (2, 3, 0.07), (0, 3, 0.15)])
            .unwrap();
        let comm = WeightedGraph::new(4, GraphKind::Comm, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let plant = Plant::new(PlantParams::uniform(4), ControllerGains::benchmark(4), dc, Some(comm), config)
            .unwrap();
        Scenario::new(plant).with_events(vec![Event {
            t: 1.0,
            area: 0,
            dp_m: -0.2,
        }])
    }

    fn equilibrium_of(entry: &SweepEntry) -> &EquilibriumReport {
        &entry.result.as_ref().unwrap().equilibrium
    }

    #[test]
    fn delta_ladder() {
        let out = sweep(&base(ControllerConfig::SecondaryDistributed), SweepParam::Delta, &[5.0, 50.0, 500.0])
            .unwrap();
        // with a uniform integral gain the average deviations vanish for any δ
        for e in &out {
            let eq = equilibrium_of(e);
            assert!(eq.omega_hat_avg.abs() < 1e-12 && eq.v_hat_avg.abs() < 1e-10);
        }
        // and (ω̂, V̂) approach the equilibrium of the averaged controller
        let mut proj = base(ControllerConfig::SecondaryProjected).plant;
        proj.params.p_m[0] = -0.2;
        let limit = equilibrium(&proj.assemble()).unwrap().x0;
        let gap: Vec<f64> = out
            .iter()
            .map(|e| {
                equilibrium_of(e).x0[..8]
                    .iter()
                    .zip(&limit)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect();
        assert!(gap[0] > gap[1] && gap[1] > gap[2], "{gap:?}");
    }

    #[test]
    fn singleton_matches_direct_call() {
        let scn = base(ControllerConfig::SecondaryDistributed);
        let out = sweep(&scn, SweepParam::Delta, &[5.0]).unwrap();
        let mut plant = scn.plant.clone();
        plant.params.p_m[0] = -0.2;
        let direct = equilibrium(&plant.assemble()).unwrap();
        assert_eq!(out[0].result.as_ref().unwrap().equilibrium, direct);
    }

    #[test]
    fn failures_stay_per_entry() {
        let out = sweep(&base(ControllerConfig::SecondaryDistributed), SweepParam::Delta, &[5.0, -1.0, 50.0])
            .unwrap();
        assert!(out[0].result.is_ok() && out[2].result.is_ok());
        assert!(matches!(out[1].result, Err(SimError::Plant(_))));
        let out = sweep(&base(ControllerConfig::SecondaryComplete), SweepParam::Gamma, &[0.0, 1e-2]).unwrap();
        assert!(out[0].result.is_err() && out[1].result.is_ok());
        assert!(sweep(&base(ControllerConfig::DroopOnly), SweepParam::KDroop, &[]).is_err());
    }
}
