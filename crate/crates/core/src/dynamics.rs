//! Routing probabilities and the linear traffic model `ẋ = Ax + Bu`.
//!
//! Only interior densities are states. Road `i`'s outflow `p_i ρ_i` is split
//! among its out-neighbors by the tendency probabilities `q_{j,i}`; the share
//! sent to outlets leaves the network.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::NoirGraph;

/// Allowed deviation of a tendency distribution's sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Slack on `|μ + 1| < 1` when testing eigenvalue disk membership.
pub const DISK_TOLERANCE: f64 = 1e-9;

/// Lower end of the open interval random outflow probabilities are drawn from.
pub const RANDOM_P_MIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("outflow probability of road {node} is {value}, expected a value in (0, 1]")]
    ProbabilityOutOfRange { node: usize, value: f64 },
    #[error("tendency probability q({to},{from}) is {value}, expected a value in [0, 1]")]
    TendencyOutOfRange { from: usize, to: usize, value: f64 },
    #[error("tendency probabilities leaving road {node} sum to {sum}, expected 1")]
    TendencyRowSumError { node: usize, sum: f64 },
    #[error("missing {0}")]
    MissingEntry(String),
    #[error("unexpected {0}")]
    UnexpectedEntry(String),
    #[error("interior road {node} has no downstream neighbor")]
    DeadEnd { node: usize },
}

/// Validated outflow and tendency probabilities for every interior road.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingModel {
    /// `p[i]` is the outflow probability of state `i`.
    p: Vec<f64>,
    /// `(from, to) -> q_{to,from}` for every edge leaving an interior road.
    q: BTreeMap<(usize, usize), f64>,
    /// Fraction of each interior road's outflow that goes straight to outlets.
    outlet_fraction: Vec<f64>,
}

impl RoutingModel {
    /// Validates `p` (keyed by road) and `q` (keyed by `(from, to)` edge).
    pub fn build(
        g: &NoirGraph,
        p: &BTreeMap<usize, f64>,
        q: &BTreeMap<(usize, usize), f64>,
    ) -> Result<Self, RoutingError> {
        for &node in p.keys() {
            if g.state_index(node).is_none() {
                return Err(RoutingError::UnexpectedEntry(format!("outflow probability for non-interior road {node}")));
            }
        }
        for &(from, to) in q.keys() {
            if g.state_index(from).is_none() || !g.has_edge(from, to) {
                return Err(RoutingError::UnexpectedEntry(format!(
                    "tendency probability on ({from}, {to}), which is not an edge leaving an interior road"
                )));
            }
        }

        let mut pv = Vec::with_capacity(g.n_interior());
        let mut outlet_fraction = Vec::with_capacity(g.n_interior());
        for node in g.interior() {
            let value = *p
                .get(&node)
                .ok_or_else(|| RoutingError::MissingEntry(format!("outflow probability for road {node}")))?;
            if !(value > 0.0 && value <= 1.0) {
                return Err(RoutingError::ProbabilityOutOfRange { node, value });
            }
            pv.push(value);

            let outs = g.out_neighbors(node).expect("interior index");
            if outs.is_empty() {
                return Err(RoutingError::DeadEnd { node });
            }
            let mut sum = 0.0;
            let mut to_outlets = 0.0;
            for to in outs {
                let value = *q
                    .get(&(node, to))
                    .ok_or_else(|| RoutingError::MissingEntry(format!("tendency probability on ({node}, {to})")))?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(RoutingError::TendencyOutOfRange { from: node, to, value });
                }
                sum += value;
                if g.state_index(to).is_none() {
                    to_outlets += value;
                }
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(RoutingError::TendencyRowSumError { node, sum });
            }
            outlet_fraction.push(to_outlets);
        }

        Ok(RoutingModel { p: pv, q: q.clone(), outlet_fraction })
    }

    /// Draws a routing model deterministically from `seed`. Outflow
    /// probabilities are uniform on `(RANDOM_P_MIN, 1)`; each road's tendency
    /// distribution is uniform on the simplex over its out-neighbors.
    pub fn random(g: &NoirGraph, seed: u64) -> Result<Self, RoutingError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = BTreeMap::new();
        let mut q = BTreeMap::new();
        for node in g.interior() {
            let u: f64 = rng.sample(Open01);
            p.insert(node, RANDOM_P_MIN + (1.0 - RANDOM_P_MIN) * u);
            let outs: Vec<usize> = g.out_neighbors(node).expect("interior index").into_iter().collect();
            if outs.len() == 1 {
                q.insert((node, outs[0]), 1.0);
                continue;
            }
            // Normalized unit exponentials are Dirichlet(1, ..., 1).
            let draws: Vec<f64> = outs.iter().map(|_| -rng.sample::<f64, _>(Open01).ln()).collect();
            let total: f64 = draws.iter().sum();
            let mut acc = 0.0;
            for (k, (&to, d)) in outs.iter().zip(&draws).enumerate() {
                let value = if k + 1 == outs.len() { 1.0 - acc } else { d / total };
                acc += value;
                q.insert((node, to), value.max(0.0));
            }
        }
        Self::build(g, &p, &q)
    }

    /// Outflow probabilities in state order.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn p_of(&self, g: &NoirGraph, node: usize) -> Option<f64> {
        g.state_index(node).map(|i| self.p[i])
    }

    /// Tendency probabilities keyed by `(from, to)`.
    pub fn q(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.q
    }

    /// Share of each interior road's outflow routed directly to outlets, in state order.
    pub fn outlet_fraction(&self) -> &[f64] {
        &self.outlet_fraction
    }

    /// The outflow probability matrix `P = diag(p)`.
    pub fn p_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.p))
    }

    /// Interior-to-interior tendency matrix with `Q[i][j] = q_{i,j}` in state indices.
    pub fn q_matrix(&self, g: &NoirGraph) -> DMatrix<f64> {
        let n = g.n_interior();
        let mut q = DMatrix::zeros(n, n);
        for (&(from, to), &value) in &self.q {
            if let (Some(j), Some(i)) = (g.state_index(from), g.state_index(to)) {
                q[(i, j)] = value;
            }
        }
        q
    }
}

/// State and input matrices of the traffic model.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiTraffic {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LtiTraffic {
    pub fn assemble(g: &NoirGraph, rm: &RoutingModel) -> Self {
        LtiTraffic { a: assemble_a(g, rm), b: assemble_b(g) }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
}

/// `A = (Q − I)P`.
pub fn assemble_a(g: &NoirGraph, rm: &RoutingModel) -> DMatrix<f64> {
    let n = g.n_interior();
    (rm.q_matrix(g) - DMatrix::identity(n, n)) * rm.p_matrix()
}

/// `b_ij = 1` iff inlet `j` feeds interior road `i`.
pub fn assemble_b(g: &NoirGraph) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(g.n_interior(), g.n_inlets());
    for inlet in g.inlets() {
        if let Some(i) = g.state_index(g.inlet_target(inlet)) {
            b[(i, inlet - 1)] = 1.0;
        }
    }
    b
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub hurwitz: bool,
    pub in_unit_disk_at_minus_one: bool,
    pub max_real_part: f64,
    /// `max |μ + 1|` over the spectrum.
    pub max_disk_radius: f64,
}

/// Eigenvalues of `a` with the Hurwitz and disk-membership verdicts.
pub fn spectrum_check(a: &DMatrix<f64>) -> Result<SpectrumReport, SpectrumError> {
    if !a.is_square() {
        return Err(SpectrumError::NotSquare(a.nrows(), a.ncols()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SpectrumError::NonFinite);
    }
    let mut eigenvalues: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let max_real_part = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let max_disk_radius = eigenvalues.iter().map(|z| (z + Complex::new(1.0, 0.0)).norm()).fold(0.0, f64::max);
    Ok(SpectrumReport {
        hurwitz: max_real_part < 0.0,
        in_unit_disk_at_minus_one: max_disk_radius < 1.0 + DISK_TOLERANCE,
        eigenvalues,
        max_real_part,
        max_disk_radius,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagramError {
    #[error("fundamental diagram constants must be positive and finite (rho_max = {rho_max}, z_max = {z_max})")]
    NonPositive { rho_max: f64, z_max: f64 },
}

/// The two constants the fundamental diagram contributes: density and flow caps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalDiagram {
    rho_max: f64,
    z_max: f64,
}

impl FundamentalDiagram {
    pub fn new(rho_max: f64, z_max: f64) -> Result<Self, DiagramError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(rho_max) && ok(z_max) {
            Ok(Self { rho_max, z_max })
        } else {
            Err(DiagramError::NonPositive { rho_max, z_max })
        }
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    /// Largest admissible outflow probability, `min(z_max / rho_max, 1)`.
    pub fn feasible_outflow_bound(&self) -> f64 {
        (self.z_max / self.rho_max).min(1.0)
    }

    /// Interior roads whose outflow probability exceeds the bound, with their `p`.
    pub fn outflow_violations(&self, g: &NoirGraph, rm: &RoutingModel) -> Vec<(usize, f64)> {
        let bound = self.feasible_outflow_bound();
        rm.p().iter().enumerate().filter(|(_, &p)| p > bound).map(|(i, &p)| (g.state_node(i), p)).collect()
    }

    /// Every `(road, grid index, density)` above `rho_max`.
    pub fn check_density_constraint(&self, g: &NoirGraph, traj: &[DVector<f64>]) -> Vec<DensityViolation> {
        traj.iter()
            .enumerate()
            .flat_map(|(k, x)| {
                x.iter().enumerate().filter(|(_, &v)| v > self.rho_max).map(move |(i, &v)| DensityViolation {
                    node: g.state_node(i),
                    step: k,
                    value: v,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityViolation {
    pub node: usize,
    pub step: usize,
    pub value: f64,
}
