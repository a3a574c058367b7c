//! Network of interconnected roads (NOIR).
//!
//! Roads are numbered from 1 using a cumulative convention: inlets occupy
//! `1..=n_in`, outlets the next `n_out` indices and interior roads the rest.
//! Every index that crosses the public API is 1-based.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Serializable description of a network: three counts and a directed edge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub inlets: usize,
    pub outlets: usize,
    pub interior: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Which partition a road belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoadKind {
    Inlet,
    Outlet,
    Interior,
}

impl fmt::Display for RoadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoadKind::Inlet => "inlet",
            RoadKind::Outlet => "outlet",
            RoadKind::Interior => "interior",
        })
    }
}

/// The clause of the boundary-degree assumption that a node breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClause {
    InletHasUpstream { count: usize },
    InletOutDegree { count: usize },
    OutletInDegree { count: usize },
    OutletHasDownstream { count: usize },
}

impl fmt::Display for BoundaryClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryClause::InletHasUpstream { count } => {
                write!(f, "inlet must have no in-neighbors (found {count})")
            }
            BoundaryClause::InletOutDegree { count } => {
                write!(f, "inlet must have exactly one out-neighbor (found {count})")
            }
            BoundaryClause::OutletInDegree { count } => {
                write!(f, "outlet must have exactly one in-neighbor (found {count})")
            }
            BoundaryClause::OutletHasDownstream { count } => {
                write!(f, "outlet must have no out-neighbors (found {count})")
            }
        }
    }
}

/// A single reason a graph description was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphViolation {
    EmptyPartition(RoadKind),
    InvalidIndex { edge: (usize, usize), node: usize },
    SelfLoop { node: usize },
    DuplicateEdge { from: usize, to: usize },
    BoundaryDegree { node: usize, clause: BoundaryClause },
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::EmptyPartition(kind) => write!(f, "network needs at least one {kind} road"),
            GraphViolation::InvalidIndex { edge, node } => {
                write!(f, "edge ({}, {}) references unknown road {node}", edge.0, edge.1)
            }
            GraphViolation::SelfLoop { node } => write!(f, "self-loop on road {node}"),
            GraphViolation::DuplicateEdge { from, to } => write!(f, "duplicate edge ({from}, {to})"),
            GraphViolation::BoundaryDegree { node, clause } => {
                write!(f, "boundary assumption violated at road {node}: {clause}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("invalid network: {}", join_violations(.0))]
    Rejected(Vec<GraphViolation>),
    #[error("road index {index} is outside 1..={len}")]
    InvalidIndex { index: usize, len: usize },
}

fn join_violations(v: &[GraphViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Validated, immutable road network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoirGraph {
    n_in: usize,
    n_out: usize,
    n_interior: usize,
    edges: BTreeSet<(usize, usize)>,
    // 0-based adjacency, sorted.
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl NoirGraph {
    /// Validates `spec` and builds the network. Every violated invariant is
    /// reported, not just the first one.
    pub fn build(spec: &GraphSpec) -> Result<Self, GraphError> {
        let mut violations = Vec::new();
        for (count, kind) in
            [(spec.inlets, RoadKind::Inlet), (spec.outlets, RoadKind::Outlet), (spec.interior, RoadKind::Interior)]
        {
            if count == 0 {
                violations.push(GraphViolation::EmptyPartition(kind));
            }
        }
        let n = spec.inlets + spec.outlets + spec.interior;
        let mut edges = BTreeSet::new();
        for &[from, to] in &spec.edges {
            let mut ok = true;
            for node in [from, to] {
                if node == 0 || node > n {
                    violations.push(GraphViolation::InvalidIndex { edge: (from, to), node });
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            if from == to {
                violations.push(GraphViolation::SelfLoop { node: from });
            } else if !edges.insert((from, to)) {
                violations.push(GraphViolation::DuplicateEdge { from, to });
            }
        }

        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for &(from, to) in &edges {
            succ[from - 1].push(to - 1);
            pred[to - 1].push(from - 1);
        }

        let g = NoirGraph { n_in: spec.inlets, n_out: spec.outlets, n_interior: spec.interior, edges, succ, pred };
        for node in g.inlets() {
            let (ins, outs) = (g.pred[node - 1].len(), g.succ[node - 1].len());
            if ins != 0 {
                violations.push(GraphViolation::BoundaryDegree {
                    node,
                    clause: BoundaryClause::InletHasUpstream { count: ins },
                });
            }
            if outs != 1 {
                violations.push(GraphViolation::BoundaryDegree {
                    node,
                    clause: BoundaryClause::InletOutDegree { count: outs },
                });
            }
        }
        for node in g.outlets() {
            let (ins, outs) = (g.pred[node - 1].len(), g.succ[node - 1].len());
            if ins != 1 {
                violations.push(GraphViolation::BoundaryDegree {
                    node,
                    clause: BoundaryClause::OutletInDegree { count: ins },
                });
            }
            if outs != 0 {
                violations.push(GraphViolation::BoundaryDegree {
                    node,
                    clause: BoundaryClause::OutletHasDownstream { count: outs },
                });
            }
        }

        if violations.is_empty() {
            Ok(g)
        } else {
            Err(GraphError::Rejected(violations))
        }
    }

    pub fn spec(&self) -> GraphSpec {
        GraphSpec {
            inlets: self.n_in,
            outlets: self.n_out,
            interior: self.n_interior,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn n_inlets(&self) -> usize {
        self.n_in
    }

    pub fn n_outlets(&self) -> usize {
        self.n_out
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Total number of roads `N`.
    pub fn len(&self) -> usize {
        self.n_in + self.n_out + self.n_interior
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the last outlet, i.e. the cumulative count of inlets and outlets.
    pub fn last_outlet(&self) -> usize {
        self.n_in + self.n_out
    }

    pub fn inlets(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n_in
    }

    pub fn outlets(&self) -> std::ops::RangeInclusive<usize> {
        self.n_in + 1..=self.last_outlet()
    }

    pub fn interior(&self) -> std::ops::RangeInclusive<usize> {
        self.last_outlet() + 1..=self.len()
    }

    pub fn kind(&self, node: usize) -> Result<RoadKind, GraphError> {
        self.check_index(node)?;
        Ok(if node <= self.n_in {
            RoadKind::Inlet
        } else if node <= self.last_outlet() {
            RoadKind::Outlet
        } else {
            RoadKind::Interior
        })
    }

    /// Position of an interior road in the state vector, if `node` is interior.
    pub fn state_index(&self, node: usize) -> Option<usize> {
        self.interior().contains(&node).then(|| node - self.last_outlet() - 1)
    }

    /// Road index of state-vector position `i`.
    pub fn state_node(&self, i: usize) -> usize {
        self.last_outlet() + 1 + i
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    fn check_index(&self, node: usize) -> Result<(), GraphError> {
        if node == 0 || node > self.len() {
            Err(GraphError::InvalidIndex { index: node, len: self.len() })
        } else {
            Ok(())
        }
    }

    /// Upstream neighbors `{j | (j, i) ∈ E}`.
    pub fn in_neighbors(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_index(node)?;
        Ok(self.pred[node - 1].iter().map(|&j| j + 1).collect())
    }

    /// Downstream neighbors `{j | (i, j) ∈ E}`.
    pub fn out_neighbors(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_index(node)?;
        Ok(self.succ[node - 1].iter().map(|&j| j + 1).collect())
    }

    /// The interior road fed by inlet `inlet`.
    pub fn inlet_target(&self, inlet: usize) -> usize {
        self.succ[inlet - 1][0] + 1
    }

    /// Roads reachable from `node` by a path of length ≥ 1.
    pub fn reachable_from(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_index(node)?;
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([node - 1]);
        let mut out = BTreeSet::new();
        while let Some(v) = queue.pop_front() {
            for &w in &self.succ[v] {
                if !seen[w] {
                    seen[w] = true;
                    out.insert(w + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(out)
    }

    /// Checks the two path conditions under which the dynamics matrix is Hurwitz.
    pub fn check_connectivity(&self, mode: ConnectivityMode) -> ConnectivityReport {
        let reach: Vec<BTreeSet<usize>> =
            (1..=self.len()).map(|v| self.reachable_from(v).expect("index in range")).collect();

        let mut unreached = Vec::new();
        for node in self.interior() {
            let sources: Vec<usize> = self.inlets().filter(|&j| !reach[j - 1].contains(&node)).collect();
            let fails = match mode {
                ConnectivityMode::EveryInlet => !sources.is_empty(),
                ConnectivityMode::SomeInlet => sources.len() == self.n_in,
            };
            if fails {
                unreached.extend(sources.into_iter().map(|inlet| (inlet, node)));
            }
        }

        let mut stranded = Vec::new();
        for node in self.interior() {
            for outlet in self.outlets() {
                if !reach[node - 1].contains(&outlet) {
                    stranded.push((node, outlet));
                }
            }
        }

        ConnectivityReport { mode, unreached, stranded }
    }
}

/// How the inlet-to-interior path condition is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectivityMode {
    /// Every interior road must be reachable from every inlet.
    #[default]
    EveryInlet,
    /// Every interior road must be reachable from at least one inlet.
    SomeInlet,
}

/// Outcome of [`NoirGraph::check_connectivity`]. Failing pairs double as witnesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub mode: ConnectivityMode,
    /// `(inlet, interior)` pairs with no connecting path. Under
    /// [`ConnectivityMode::SomeInlet`] only interior roads reached by no inlet
    /// at all are listed.
    pub unreached: Vec<(usize, usize)>,
    /// `(interior, outlet)` pairs with no connecting path.
    pub stranded: Vec<(usize, usize)>,
}

impl ConnectivityReport {
    pub fn inlets_reach_interior(&self) -> bool {
        self.unreached.is_empty()
    }

    pub fn interior_reaches_outlets(&self) -> bool {
        self.stranded.is_empty()
    }

    pub fn is_satisfied(&self) -> bool {
        self.inlets_reach_interior() && self.interior_reaches_outlets()
    }
}

impl fmt::Display for ConnectivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unreached.first() {
            None => writeln!(f, "inlet-to-interior paths: ok")?,
            Some((i, n)) => writeln!(
                f,
                "inlet-to-interior paths: FAIL ({} missing, e.g. inlet {i} cannot reach road {n})",
                self.unreached.len()
            )?,
        }
        match self.stranded.first() {
            None => write!(f, "interior-to-outlet paths: ok"),
            Some((n, o)) => write!(
                f,
                "interior-to-outlet paths: FAIL ({} missing, e.g. road {n} cannot reach outlet {o})",
                self.stranded.len()
            ),
        }
    }
}
