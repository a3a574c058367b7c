//! Scenario files: one TOML document holding the network, routing, cost,
//! initial state, fundamental-diagram caps and optional ζ list.
//!
//! ```toml
//! schema_version = 1
//!
//! [graph]
//! inlets = 1
//! outlets = 1
//! interior = 1
//! edges = [[1, 3], [3, 2]]
//!
//! [routing]
//! p = [{ road = 3, value = 0.5 }]
//! q = [{ from = 3, to = 2, value = 1.0 }]
//! # or: seed = 7
//!
//! [cost]
//! r = [1.0]
//! w = [1.0]
//! u0 = 1.0
//! t0 = 0.0
//! tf = 2.0
//! steps = 2000
//! iterations = 15
//!
//! [initial]
//! x0 = [0.0]
//!
//! [fundamental_diagram]
//! rho_max = 10.0
//! z_max = 10.0
//! ```
//!
//! Densities are vehicle counts per road element. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DiagramError, FundamentalDiagram, RoutingError, RoutingModel};
use crate::graph::{ConnectivityMode, GraphError, GraphSpec, NoirGraph};
use crate::kernel::{KernelError, TimeGrid};
use crate::sweep::{CostSpec, SweepError, SweepOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub graph: GraphSpec,
    pub routing: RoutingSection,
    pub cost: CostSection,
    pub initial: InitialSection,
    pub fundamental_diagram: DiagramSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<ZetaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<OutflowEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<TendencyEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutflowEntry {
    pub road: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendencyEntry {
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// Density weights, one per interior road in ascending road order.
    pub r: Vec<f64>,
    /// Inflow weights, one per inlet.
    pub w: Vec<f64>,
    pub u0: f64,
    pub t0: f64,
    pub tf: f64,
    pub steps: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramSection {
    pub rho_max: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaSection {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<ConnectivityMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_disconnected: Option<bool>,
}

/// A module-level validation failure, tagged with the section it came from.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Grid(#[from] KernelError),
    #[error(transparent)]
    Cost(#[from] SweepError),
    #[error("{0}")]
    Field(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid [{section}]: {source}")]
    Validation { section: &'static str, source: ValidationError },
}

fn invalid(section: &'static str, source: impl Into<ValidationError>) -> ScenarioError {
    ScenarioError::Validation { section, source: source.into() }
}

/// A scenario whose every section has passed module-level validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    file: ScenarioFile,
    pub graph: NoirGraph,
    pub routing: RoutingModel,
    pub cost: CostSpec,
    pub x0: DVector<f64>,
    pub diagram: FundamentalDiagram,
    pub zetas: Vec<f64>,
    pub options: SweepOptions,
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                ValidationError::Field(format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    file.schema_version
                )),
            ));
        }
        let graph = NoirGraph::build(&file.graph).map_err(|e| invalid("graph", e))?;
        let routing = routing_from_section(&graph, &file.routing)?;

        let c = &file.cost;
        if c.r.len() != graph.n_interior() {
            return Err(invalid(
                "cost",
                ValidationError::Field(format!(
                    "r has {} entries, expected one per interior road ({})",
                    c.r.len(),
                    graph.n_interior()
                )),
            ));
        }
        if c.w.len() != graph.n_inlets() {
            return Err(invalid(
                "cost",
                ValidationError::Field(format!(
                    "w has {} entries, expected one per inlet ({})",
                    c.w.len(),
                    graph.n_inlets()
                )),
            ));
        }
        if c.iterations == 0 {
            return Err(invalid("cost", ValidationError::Field("iterations must be at least 1".into())));
        }
        let grid = TimeGrid::new(c.t0, c.tf, c.steps).map_err(|e| invalid("cost", e))?;
        let cost = CostSpec::new(c.r.clone(), c.w.clone(), c.u0, grid).map_err(|e| invalid("cost", e))?;

        let x0 = &file.initial.x0;
        if x0.len() != graph.n_interior() {
            return Err(invalid(
                "initial",
                ValidationError::Field(format!(
                    "x0 has {} entries, expected one per interior road ({})",
                    x0.len(),
                    graph.n_interior()
                )),
            ));
        }
        if let Some((i, v)) = x0.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(
                "initial",
                ValidationError::Field(format!("density of road {} is {v}", graph.state_node(i))),
            ));
        }

        let fd = file.fundamental_diagram;
        let diagram = FundamentalDiagram::new(fd.rho_max, fd.z_max).map_err(|e| invalid("fundamental_diagram", e))?;

        let zetas = file.zeta.as_ref().map(|z| z.values.clone()).unwrap_or_default();
        if let Some(z) = zetas.iter().find(|z| !(**z >= 0.0 && z.is_finite())) {
            return Err(invalid("zeta", ValidationError::Field(format!("ζ must be non-negative, got {z}"))));
        }
        if file.zeta.is_some() && zetas.is_empty() {
            return Err(invalid("zeta", ValidationError::Field("values must not be empty".into())));
        }

        let mut options = SweepOptions { iterations: c.iterations, ..SweepOptions::default() };
        if let Some(s) = file.solver {
            if let Some(d) = s.damping {
                if !(0.0..1.0).contains(&d) {
                    return Err(invalid(
                        "solver",
                        ValidationError::Field(format!("damping must lie in [0, 1), got {d}")),
                    ));
                }
                options.damping = d;
            }
            options.connectivity = s.connectivity.unwrap_or_default();
            options.allow_disconnected = s.allow_disconnected.unwrap_or(false);
        }

        Ok(Scenario { x0: DVector::from_column_slice(x0), file, graph, routing, cost, diagram, zetas, options })
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn to_toml(&self) -> String {
        self.file.to_toml()
    }
}

fn routing_from_section(g: &NoirGraph, section: &RoutingSection) -> Result<RoutingModel, ScenarioError> {
    match (section.seed, &section.p, &section.q) {
        (Some(seed), None, None) => RoutingModel::random(g, seed).map_err(|e| invalid("routing", e)),
        (None, Some(p), Some(q)) => {
            let mut pm = BTreeMap::new();
            for e in p {
                if pm.insert(e.road, e.value).is_some() {
                    return Err(invalid(
                        "routing",
                        ValidationError::Field(format!("duplicate outflow probability for road {}", e.road)),
                    ));
                }
            }
            let mut qm = BTreeMap::new();
            for e in q {
                if qm.insert((e.from, e.to), e.value).is_some() {
                    return Err(invalid(
                        "routing",
                        ValidationError::Field(format!("duplicate tendency probability on ({}, {})", e.from, e.to)),
                    ));
                }
            }
            RoutingModel::build(g, &pm, &qm).map_err(|e| invalid("routing", e))
        }
        _ => Err(invalid("routing", ValidationError::Field("give either `seed` or both `p` and `q`".into()))),
    }
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Scenario around `graph` with routing drawn from `seed` and default
    /// weights, horizon and caps.
    pub fn generated(graph: &NoirGraph, seed: u64) -> Result<Self, RoutingError> {
        let rm = RoutingModel::random(graph, seed)?;
        let (n, m) = (graph.n_interior(), graph.n_inlets());
        Ok(ScenarioFile {
            schema_version: SCHEMA_VERSION,
            graph: graph.spec(),
            routing: routing_section(graph, &rm),
            cost: CostSection {
                r: vec![1.0; n],
                w: vec![1.0; m],
                u0: 20.0,
                t0: 0.0,
                tf: 20.0,
                steps: 2000,
                iterations: 15,
            },
            initial: InitialSection { x0: vec![10.0; n] },
            fundamental_diagram: DiagramSection { rho_max: 100.0, z_max: 100.0 },
            zeta: None,
            solver: None,
        })
    }
}

/// Explicit `p`/`q` lists for a routing model.
pub fn routing_section(g: &NoirGraph, rm: &RoutingModel) -> RoutingSection {
    RoutingSection {
        seed: None,
        p: Some(rm.p().iter().enumerate().map(|(i, &value)| OutflowEntry { road: g.state_node(i), value }).collect()),
        q: Some(rm.q().iter().map(|(&(from, to), &value)| TendencyEntry { from, to, value }).collect()),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_file(ScenarioFile::from_toml(text)?)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

/// Reads just the `[graph]` table of a TOML document; other tables are ignored.
pub fn parse_graph_only(text: &str) -> Result<NoirGraph, ScenarioError> {
    #[derive(Deserialize)]
    struct GraphOnly {
        graph: GraphSpec,
    }
    let doc: GraphOnly = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    NoirGraph::build(&doc.graph).map_err(|e| invalid("graph", e))
}
