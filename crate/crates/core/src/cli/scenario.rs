//! The JSON scenario format.
//!
//! Indices in files are 1-based. Per-area quantities and gains may be given
//! as a scalar, which is broadcast to every area.

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::netgraph::{GraphKind, WeightedGraph};
use crate::plant::{ControllerConfig, ControllerGains, Plant, PlantParams, DEFAULT_INERTIA, DEFAULT_TERMINAL_CAPACITANCE};
use crate::sim::{Event, LineRl, Scenario, SimMode, DEFAULT_DT, DEFAULT_T_END};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest `‖P^inj,nom/V^nom - L_R V^ref‖_∞` accepted as a DC equilibrium.
const REFERENCE_BALANCE_TOL: f64 = 1e-9;

/// A scalar broadcast to all areas, or one value per area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerArea {
    Scalar(f64),
    Values(Vec<f64>),
}

impl PerArea {
    fn resolve(&self, field: &str, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            PerArea::Scalar(v) => Ok(vec![*v; n]),
            PerArea::Values(v) if v.len() == n => Ok(v.clone()),
            PerArea::Values(v) => Err(CliError::Invalid(format!(
                "{field}: expected {n} values (one per area) or a scalar, got {}",
                v.len()
            ))),
        }
    }
}

impl From<f64> for PerArea {
    fn from(v: f64) -> Self {
        PerArea::Scalar(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Controller {
    #[serde(rename = "droop")]
    Droop,
    #[serde(rename = "secondary-complete")]
    SecondaryComplete,
    #[serde(rename = "secondary-projected")]
    SecondaryProjected,
    #[serde(rename = "secondary-distributed")]
    SecondaryDistributed,
}

impl Controller {
    pub const ALL: [Controller; 4] = [
        Controller::Droop,
        Controller::SecondaryComplete,
        Controller::SecondaryProjected,
        Controller::SecondaryDistributed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Controller::Droop => "droop",
            Controller::SecondaryComplete => "secondary-complete",
            Controller::SecondaryProjected => "secondary-projected",
            Controller::SecondaryDistributed => "secondary-distributed",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn config(self) -> ControllerConfig {
        match self {
            Controller::Droop => ControllerConfig::DroopOnly,
            Controller::SecondaryComplete => ControllerConfig::SecondaryComplete,
            Controller::SecondaryProjected => ControllerConfig::SecondaryProjected,
            Controller::SecondaryDistributed => ControllerConfig::SecondaryDistributed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub i: usize,
    pub j: usize,
    /// Resistance `R_ij`.
    pub r: f64,
    /// Series inductance, needed for `rl-lines` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// Shunt capacitance, lumped into the end terminals in `rl-lines` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nodes: usize,
    pub lines: Vec<LineSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommEdge {
    pub i: usize,
    pub j: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    pub edges: Vec<CommEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreasSection {
    pub m: PerArea,
    pub cap: PerArea,
    pub p_nom: PerArea,
    pub v_ref: PerArea,
    pub v_nom: f64,
    pub omega_ref: f64,
    /// Defaults to `p_nom`; when given it must equal `p_nom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_inj_nom: Option<PerArea>,
    /// Disturbance present from `t = 0`; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_m: Option<PerArea>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub k_omega: PerArea,
    pub k_v: PerArea,
    pub k_droop: PerArea,
    pub k_droop_i: PerArea,
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    pub mode: SimMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            mode: SimMode::Linear,
            substeps: None,
            record_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub t: f64,
    /// 1-based area index.
    pub area: usize,
    pub dp_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<CommSection>,
    pub areas: AreasSection,
    pub gains: GainsSection,
    pub controller: Controller,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
            CliError::Invalid(format!(
                "scenario JSON, line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        if file.schema != SCHEMA_VERSION {
            return Err(CliError::Invalid(format!(
                "schema: unsupported version {} (expected {SCHEMA_VERSION})",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn n(&self) -> usize {
        self.grid.nodes
    }

    /// Validates everything and builds the simulation scenario.
    pub fn resolve(&self) -> Result<Scenario, CliError> {
        let n = self.grid.nodes;
        if n == 0 {
            return Err(CliError::Invalid("grid.nodes: at least one node is required".into()));
        }
        let mut resistances = Vec::with_capacity(self.grid.lines.len());
        for (k, line) in self.grid.lines.iter().enumerate() {
            check_index(&format!("grid.lines[{k}].i"), line.i, n)?;
            check_index(&format!("grid.lines[{k}].j"), line.j, n)?;
            if !(line.r > 0.0 && line.r.is_finite()) {
                return Err(CliError::Invalid(format!("grid.lines[{k}].r: must be > 0, got {}", line.r)));
            }
            resistances.push((line.i - 1, line.j - 1, line.r));
        }
        let dc = WeightedGraph::dc_from_resistances(n, resistances)
            .map_err(|e| CliError::Invalid(format!("grid: {e}")))?;

        let comm = match &self.comm {
            Some(c) => {
                let mut edges = Vec::with_capacity(c.edges.len());
                for (k, e) in c.edges.iter().enumerate() {
                    check_index(&format!("comm.edges[{k}].i"), e.i, n)?;
                    check_index(&format!("comm.edges[{k}].j"), e.j, n)?;
                    edges.push((e.i - 1, e.j - 1, e.weight.unwrap_or(1.0)));
                }
                Some(
                    WeightedGraph::new(n, GraphKind::Comm, edges)
                        .map_err(|e| CliError::Invalid(format!("comm: {e}")))?,
                )
            }
            None => None,
        };

        let a = &self.areas;
        let p_nom = a.p_nom.resolve("areas.p_nom", n)?;
        let params = PlantParams::new(
            a.m.resolve("areas.m", n)?,
            a.cap.resolve("areas.cap", n)?,
            a.v_nom,
            a.v_ref.resolve("areas.v_ref", n)?,
            a.omega_ref,
            p_nom.clone(),
            match &a.p_inj_nom {
                Some(p) => p.resolve("areas.p_inj_nom", n)?,
                None => p_nom,
            },
            match &a.p_m {
                Some(p) => p.resolve("areas.p_m", n)?,
                None => vec![0.0; n],
            },
        )
        .map_err(|e| CliError::Invalid(format!("areas: {e}")))?;

        let g = &self.gains;
        let gains = ControllerGains::new(
            g.k_omega.resolve("gains.k_omega", n)?,
            g.k_v.resolve("gains.k_v", n)?,
            g.k_droop.resolve("gains.k_droop", n)?,
            g.k_droop_i.resolve("gains.k_droop_i", n)?,
            g.gamma,
            g.delta,
        )
        .map_err(|e| CliError::Invalid(format!("gains: {e}")))?;

        let config = self.controller.config();
        if config == ControllerConfig::SecondaryDistributed && comm.is_none() {
            return Err(CliError::Invalid(
                "comm: section required for controller secondary-distributed".into(),
            ));
        }
        let plant = Plant::new(params, gains, dc, comm, config)
            .map_err(|e| CliError::Invalid(format!("scenario: {e}")))?;
        let imbalance = plant.reference_imbalance();
        if imbalance > REFERENCE_BALANCE_TOL {
            return Err(CliError::Invalid(format!(
                "areas: reference voltages are not a DC equilibrium; p_nom / v_nom must equal \
                 L_R v_ref (mismatch {imbalance:.3e})"
            )));
        }

        let mut events = Vec::with_capacity(self.events.len());
        for (k, e) in self.events.iter().enumerate() {
            check_index(&format!("events[{k}].area"), e.area, n)?;
            events.push(Event {
                t: e.t,
                area: e.area - 1,
                dp_m: e.dp_m,
            });
        }

        let lines = if self.sim.mode == SimMode::RlLines {
            self.grid
                .lines
                .iter()
                .enumerate()
                .map(|(k, line)| match line.l {
                    Some(l) => Ok(LineRl { l, c: line.c.unwrap_or(0.0) }),
                    None => Err(CliError::Invalid(format!(
                        "grid.lines[{k}].l: inductance required for sim.mode rl-lines"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        // dc_from_resistances keeps the input order, so lines align with edges
        let scenario = Scenario {
            plant,
            initial: None,
            events,
            t_end: self.sim.t_end,
            dt: self.sim.dt,
            mode: self.sim.mode,
            substeps: self.sim.substeps,
            record_every: self.sim.record_every.unwrap_or(1),
            lines,
        };
        scenario
            .validate()
            .map_err(|e| CliError::Invalid(format!("sim/events: {e}")))?;
        Ok(scenario)
    }
}

fn check_index(field: &str, idx: usize, n: usize) -> Result<(), CliError> {
    if idx == 0 || idx > n {
        return Err(CliError::Invalid(format!("{field}: index {idx} outside 1..={n}")));
    }
    Ok(())
}

/// The six-terminal benchmark grid with the given controller.
pub fn benchmark(controller: Controller) -> ScenarioFile {
    let groups: [(&[(usize, usize)], f64, f64, f64); 4] = [
        (&[(1, 2), (1, 3), (2, 4), (3, 4)], 0.0586, 0.256e-3, 0.0085),
        (&[(2, 3)], 0.0878, 0.384e-3, 0.0127),
        (&[(2, 5), (4, 5)], 0.0732, 0.32e-3, 0.0106),
        (&[(2, 6), (3, 5), (5, 6)], 0.1464, 0.64e-3, 0.0212),
    ];
    let lines = groups
        .iter()
        .flat_map(|(pairs, r, l, c)| {
            pairs.iter().map(move |&(i, j)| LineSpec {
                i,
                j,
                r: *r,
                l: Some(*l),
                c: Some(*c),
            })
        })
        .collect();
    let comm_edges = [(1, 2), (2, 3), (3, 4), (3, 5), (5, 6), (1, 6), (1, 5)]
        .into_iter()
        .map(|(i, j)| CommEdge { i, j, weight: None })
        .collect();
    ScenarioFile {
        schema: SCHEMA_VERSION,
        grid: GridSection { nodes: 6, lines },
        comm: Some(CommSection { edges: comm_edges }),
        areas: AreasSection {
            m: DEFAULT_INERTIA.into(),
            cap: DEFAULT_TERMINAL_CAPACITANCE.into(),
            p_nom: 0.0.into(),
            v_ref: 1.0.into(),
            v_nom: 1.0,
            omega_ref: 1.0,
            p_inj_nom: None,
            p_m: None,
        },
        gains: GainsSection {
            k_omega: 9000.0.into(),
            k_v: 110.0.into(),
            k_droop: 8.0.into(),
            k_droop_i: 10.0.into(),
            gamma: 0.0,
            delta: 5.0,
        },
        controller,
        sim: SimSection::default(),
        events: vec![EventSpec {
            t: 1.0,
            area: 1,
            dp_m: -0.2,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn benchmark_round_trips() {
        for c in Controller::ALL {
            let file = benchmark(c);
            let back = ScenarioFile::parse(&file.to_json()).unwrap();
            assert_eq!(back, file);
            let scn = back.resolve().unwrap();
            assert_eq!(scn.plant.n(), 6);
            assert_eq!(scn.plant.dc.edges().len(), 10);
            assert_eq!(scn.plant.comm.as_ref().unwrap().edges().len(), 7);
        }
    }

    #[test]
    fn benchmark_line_values() {
        let file = benchmark(Controller::Droop);
        let l23 = file.grid.lines.iter().find(|l| (l.i, l.j) == (2, 3)).unwrap();
        assert_eq!(l23.r, 0.0878);
        assert_eq!(l23.l, Some(0.384e-3));
        assert_eq!(file.gains.k_omega, PerArea::Scalar(9000.0));
        assert_eq!(file.events[0].dp_m, -0.2);
    }

    #[test]
    fn scalars_broadcast() {
        let scn = benchmark(Controller::Droop).resolve().unwrap();
        assert_eq!(scn.plant.gains.k_droop, vec![8.0; 6]);
        assert_eq!(scn.plant.params.cap, vec![0.375e-3; 6]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut v: serde_json::Value = serde_json::from_str(&benchmark(Controller::Droop).to_json()).unwrap();
        v["gains"]["k_extra"] = 1.0.into();
        assert!(ScenarioFile::parse(&v.to_string()).is_err());

        let mut file = benchmark(Controller::Droop);
        file.gains.k_droop = PerArea::Values(vec![8.0; 5]);
        let err = file.resolve().unwrap_err().to_string();
        assert!(err.contains("gains.k_droop"), "{err}");

        let mut file = benchmark(Controller::Droop);
        file.gains.k_droop = 0.0.into();
        assert!(file.resolve().is_err());

        let mut file = benchmark(Controller::Droop);
        file.events[0].area = 7;
        assert!(file.resolve().unwrap_err().to_string().contains("events[0].area"));

        let mut file = benchmark(Controller::SecondaryDistributed);
        file.comm = None;
        assert!(file.resolve().unwrap_err().to_string().contains("comm"));

        let mut file = benchmark(Controller::Droop);
        file.areas.p_nom = 0.5.into();
        assert!(file.resolve().is_err());
    }

    #[test]
    fn missing_section_is_named() {
        let err = ScenarioFile::parse(r#"{"schema": 1}"#).unwrap_err().to_string();
        assert!(err.contains("grid"), "{err}");
        let err = ScenarioFile::parse("").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    fn per_area(n: usize) -> impl Strategy<Value = PerArea> {
        prop_oneof![
            (0.01f64..100.0).prop_map(PerArea::Scalar),
            proptest::collection::vec(0.01f64..100.0, n).prop_map(PerArea::Values),
        ]
    }

    prop_compose! {
        fn scenario_file()(
            n in 2usize..6,
            seed in any::<u64>(),
        )(
            kw in per_area(n), kv in per_area(n), kd in per_area(n), ki in per_area(n),
            m in per_area(n), gamma in 0.0f64..1.0, delta in 0.1f64..50.0,
            r in proptest::collection::vec(0.01f64..1.0, n - 1),
            dt in prop_oneof![Just(1e-4), Just(1e-3)],
            controller in prop_oneof![
                Just(Controller::Droop), Just(Controller::SecondaryComplete),
                Just(Controller::SecondaryProjected), Just(Controller::SecondaryDistributed)
            ],
            n in Just(n), seed in Just(seed),
        ) -> ScenarioFile {
            let lines = (1..n).map(|k| LineSpec {
                i: k, j: k + 1, r: r[k - 1],
                l: (seed % 2 == 0).then_some(1e-3), c: None,
            }).collect();
            ScenarioFile {
                schema: SCHEMA_VERSION,
                grid: GridSection { nodes: n, lines },
                comm: Some(CommSection { edges: (1..n).map(|k| CommEdge {
                    i: k, j: k + 1, weight: (seed % 3 == 0).then_some(2.0),
                }).collect() }),
                areas: AreasSection {
                    m, cap: 0.375e-3.into(), p_nom: 0.0.into(), v_ref: 1.0.into(),
                    v_nom: 1.0, omega_ref: 1.0, p_inj_nom: None, p_m: None,
                },
                gains: GainsSection { k_omega: kw, k_v: kv, k_droop: kd, k_droop_i: ki, gamma, delta },
                controller,
                sim: SimSection { dt, t_end: 1.0, mode: SimMode::Linear, substeps: None, record_every: None },
                events: vec![EventSpec { t: 0.5, area: 1 + (seed as usize) % n, dp_m: -0.1 }],
            }
        }
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(file in scenario_file()) {
            let back = ScenarioFile::parse(&file.to_json()).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert!(back.resolve().is_ok());
        }
    }
}
