//! Forward-backward sweep for the inlet metering problem.
//!
//! Each outer iteration
//! 1. solves the inlet allocation at every grid point with `f = Bᵀλ`,
//! 2. picks the initial co-state `λ0 = −Φ22⁻¹(Φ21 x0 + Ψ2)` so that `λ(t_f) = 0`,
//! 3. propagates the stacked `(x, λ)` forward under the new controls.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::dd::{self, Dd, DdVec};
use crate::dynamics::{LtiTraffic, RoutingModel};
use crate::graph::{ConnectivityMode, ConnectivityReport, NoirGraph};
use crate::kernel::{AugmentedSystem, KernelError, Propagator, TimeGrid};
use crate::qp::{solve_inlet_qp, InletQp, QpError};

/// Largest acceptable 1-norm condition number of the horizon `Φ22` block.
pub const MAX_PHI22_CONDITION: f64 = 1e14;

/// `delta_u` below which early exit (when enabled) stops the outer loop.
pub const EARLY_EXIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("network fails the stability path conditions:\n{0}")]
    ConnectivityRefused(ConnectivityReport),
    #[error("Φ22 over the horizon is singular or ill-conditioned (1-norm condition ≈ {condition:e})")]
    SingularPhi22 { condition: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Weights, budget and horizon of the running cost `½∫(xᵀRx + uᵀWu)dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    r: DVector<f64>,
    w: DVector<f64>,
    u0: f64,
    grid: TimeGrid,
}

impl CostSpec {
    /// `r_i ≥ 0` per interior road, `w_j > 0` per inlet, `u0 > 0`.
    pub fn new(r: Vec<f64>, w: Vec<f64>, u0: f64, grid: TimeGrid) -> Result<Self, SweepError> {
        if r.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(SweepError::InvalidInput("density weights must be finite and non-negative".into()));
        }
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(SweepError::InvalidInput("inflow weights must be finite and positive".into()));
        }
        if !(u0 > 0.0 && u0.is_finite()) {
            return Err(SweepError::InvalidInput(format!("net inflow must be positive, got {u0}")));
        }
        Ok(CostSpec { r: DVector::from_vec(r), w: DVector::from_vec(w), u0, grid })
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Same spec with `R = ζI`.
    pub fn with_uniform_r(&self, zeta: f64) -> Result<Self, SweepError> {
        Self::new(vec![zeta; self.r.len()], self.w.iter().copied().collect(), self.u0, self.grid)
    }

    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let xr: f64 = x.iter().zip(self.r.iter()).map(|(x, r)| r * x * x).sum();
        let uw: f64 = u.iter().zip(self.w.iter()).map(|(u, w)| w * u * u).sum();
        0.5 * (xr + uw)
    }
}

/// `H = ½(xᵀRx + uᵀWu) + λᵀ(Ax + Bu)`.
pub fn hamiltonian(
    x: &DVector<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
    spec: &CostSpec,
    sys: &LtiTraffic,
) -> Result<f64, SweepError> {
    let (n, m) = (sys.n_states(), sys.n_inputs());
    if x.len() != n || lambda.len() != n || u.len() != m || spec.r.len() != n || spec.w.len() != m {
        return Err(SweepError::DimensionMismatch(format!(
            "x {}, λ {}, u {}, r {}, w {} against {n} states and {m} inputs",
            x.len(),
            lambda.len(),
            u.len(),
            spec.r.len(),
            spec.w.len()
        )));
    }
    Ok(spec.running_cost(x, u) + lambda.dot(&(&sys.a * x + &sys.b * u)))
}

/// Trapezoidal value of `½∫(xᵀRx + uᵀWu)dt` over the grid.
pub fn total_cost(x: &[DVector<f64>], u: &[DVector<f64>], spec: &CostSpec) -> f64 {
    let dt = spec.grid.dt();
    let values: Vec<f64> = x.iter().zip(u).map(|(x, u)| spec.running_cost(x, u)).collect();
    let Some((first, rest)) = values.split_first() else { return 0.0 };
    let Some((last, mid)) = rest.split_last() else { return 0.0 };
    dt * (0.5 * (first + last) + mid.iter().sum::<f64>())
}

/// Vehicles per unit time leaving through outlets, `Σ p_i x_i · (outlet share of i)`.
pub fn net_outlet_outflow(x: &[DVector<f64>], rm: &RoutingModel) -> Vec<f64> {
    x.iter().map(|x| x.iter().zip(rm.p()).zip(rm.outlet_fraction()).map(|((x, p), s)| x * p * s).sum()).collect()
}

/// Knobs of [`run_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Outer iterations `m`.
    pub iterations: usize,
    /// Stop once `delta_u < EARLY_EXIT_TOLERANCE`.
    pub early_exit: bool,
    /// Weight `β ∈ [0, 1)` kept from the previous controls: `u ← (1−β)u_qp + βu_prev`.
    pub damping: f64,
    /// Solve the per-grid-point allocations on the rayon pool.
    pub parallel: bool,
    /// Run even when the network fails the stability path conditions.
    pub allow_disconnected: bool,
    pub connectivity: ConnectivityMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            iterations: 15,
            early_exit: false,
            damping: 0.0,
            parallel: false,
            allow_disconnected: false,
            connectivity: ConnectivityMode::EveryInlet,
        }
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Max-norm change of the controls against the previous iteration (∞ on the first).
    pub delta_u: f64,
    pub cost: f64,
    /// Max-norm of the propagated co-state at `t_f`.
    pub terminal_residual: f64,
    /// Number of control entries pinned at zero across the grid.
    pub boundary_active: usize,
}

/// Trajectories of the last outer iteration plus per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub lambda: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub lambda0: DVector<f64>,
    pub iterations: Vec<IterationRecord>,
}

impl SweepState {
    pub fn iterate(&self) -> usize {
        self.iterations.len()
    }

    pub fn total_cost(&self, spec: &CostSpec) -> f64 {
        total_cost(&self.x, &self.u, spec)
    }

    pub fn net_outlet_outflow(&self, rm: &RoutingModel) -> Vec<f64> {
        net_outlet_outflow(&self.x, rm)
    }
}

fn solve_lambda0_inner(prop: &Propagator, x0: &DVector<f64>, u: &[DVector<f64>]) -> Result<DdVec, SweepError> {
    let n = x0.len();
    let phi22 = prop.phi22_horizon();
    let rhs: DdVec = prop.terminal_costate(x0, &vec![Dd::ZERO; n], u).into_iter().map(|v| -v).collect();

    let phi22_f = phi22.to_f64();
    if phi22_f.iter().any(|v| !v.is_finite()) {
        return Err(SweepError::NonFinite("Φ22"));
    }
    let lu = phi22_f.clone().lu();
    let inverse = lu.try_inverse().ok_or(SweepError::SingularPhi22 { condition: f64::INFINITY })?;
    let norm1 = |m: &DMatrix<f64>| m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let condition = norm1(&phi22_f) * norm1(&inverse);
    if condition.is_nan() || condition > MAX_PHI22_CONDITION {
        return Err(SweepError::SingularPhi22 { condition });
    }

    // Iterative refinement with double-double residuals.
    let mut lambda = vec![Dd::ZERO; n];
    for _ in 0..8 {
        let applied = phi22.mul_vec(&lambda);
        let residual: Vec<f64> = rhs.iter().zip(&applied).map(|(b, a)| (*b - *a).to_f64()).collect();
        let delta = &inverse * DVector::from_vec(residual);
        let mut largest = 0.0f64;
        for (l, d) in lambda.iter_mut().zip(delta.iter()) {
            *l = *l + Dd::from_f64(*d);
            largest = largest.max(d.abs());
        }
        if !largest.is_finite() {
            return Err(SweepError::NonFinite("λ0"));
        }
        let scale = lambda.iter().map(|l| l.hi.abs()).fold(0.0, f64::max);
        if largest <= 1e-30 * scale.max(1e-300) {
            break;
        }
    }
    Ok(lambda)
}

/// Initial co-state that makes `λ(t_f) = 0` under the controls `u`.
pub fn solve_lambda0(
    sys: &AugmentedSystem,
    x0: &DVector<f64>,
    u: &[DVector<f64>],
    grid: TimeGrid,
) -> Result<DVector<f64>, SweepError> {
    if x0.len() != sys.states() {
        return Err(SweepError::DimensionMismatch(format!("x0 has {} entries, expected {}", x0.len(), sys.states())));
    }
    let prop = Propagator::new(sys, grid)?;
    prop.check_controls(u, grid.steps())?;
    Ok(dd::to_dvector(&solve_lambda0_inner(&prop, x0, u)?))
}

fn allocate(
    lambda: &[DVector<f64>],
    b: &DMatrix<f64>,
    spec: &CostSpec,
    parallel: bool,
) -> Result<Vec<DVector<f64>>, QpError> {
    let w = spec.w.as_slice();
    let solve = |l: &DVector<f64>| {
        let f = b.tr_mul(l);
        solve_inlet_qp(&InletQp { w, f: f.as_slice(), u0: spec.u0 })
    };
    if parallel {
        lambda.par_iter().map(solve).collect()
    } else {
        lambda.iter().map(solve).collect()
    }
}

/// Runs the forward-backward sweep for `opts.iterations` outer iterations.
pub fn run_sweep(
    g: &NoirGraph,
    rm: &RoutingModel,
    spec: &CostSpec,
    x0: &DVector<f64>,
    opts: &SweepOptions,
) -> Result<SweepState, SweepError> {
    if !opts.allow_disconnected {
        let report = g.check_connectivity(opts.connectivity);
        if !report.is_satisfied() {
            return Err(SweepError::ConnectivityRefused(report));
        }
    }
    let (n, m) = (g.n_interior(), g.n_inlets());
    if spec.r.len() != n || spec.w.len() != m || x0.len() != n {
        return Err(SweepError::DimensionMismatch(format!(
            "r {}, w {}, x0 {} against {n} interior roads and {m} inlets",
            spec.r.len(),
            spec.w.len(),
            x0.len()
        )));
    }
    if x0.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(SweepError::InvalidInput("initial densities must be finite and non-negative".into()));
    }
    if opts.iterations == 0 {
        return Err(SweepError::InvalidInput("need at least one outer iteration".into()));
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(SweepError::InvalidInput(format!("damping must lie in [0, 1), got {}", opts.damping)));
    }

    let lti = LtiTraffic::assemble(g, rm);
    let sys = AugmentedSystem::from_traffic(&lti, &spec.r)?;
    let grid = spec.grid;
    let prop = Propagator::new(&sys, grid)?;

    let points = grid.points();
    let mut lambda = vec![DVector::zeros(n); points];
    let mut x = vec![x0.clone(); points];
    let mut u_prev: Option<Vec<DVector<f64>>> = None;
    let mut lambda0 = DVector::zeros(n);
    let mut records = Vec::with_capacity(opts.iterations);

    for iteration in 1..=opts.iterations {
        let mut u = allocate(&lambda, &lti.b, spec, opts.parallel)?;
        if let Some(prev) = &u_prev {
            if opts.damping > 0.0 {
                for (new, old) in u.iter_mut().zip(prev) {
                    *new = &*new * (1.0 - opts.damping) + old * opts.damping;
                }
            }
        }
        let delta_u = match &u_prev {
            None => f64::INFINITY,
            Some(prev) => u.iter().zip(prev).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max),
        };

        let l0 = solve_lambda0_inner(&prop, x0, &u)?;
        let (traj, terminal) = prop.propagate_split(x0, &l0, &u);
        x = traj.iter().map(|z| z.rows(0, n).into_owned()).collect();
        lambda = traj.iter().map(|z| z.rows(n, n).into_owned()).collect();
        if x.iter().chain(&lambda).any(|v| v.iter().any(|e| !e.is_finite())) {
            return Err(SweepError::NonFinite("propagated trajectory"));
        }
        lambda0 = dd::to_dvector(&l0);

        records.push(IterationRecord {
            iteration,
            delta_u,
            cost: total_cost(&x, &u, spec),
            terminal_residual: terminal.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max),
            boundary_active: u.iter().flat_map(|v| v.iter()).filter(|&&v| v == 0.0).count(),
        });
        u_prev = Some(u);
        if opts.early_exit && delta_u < EARLY_EXIT_TOLERANCE {
            break;
        }
    }

    Ok(SweepState { grid, x, lambda, u: u_prev.expect("at least one iteration"), lambda0, iterations: records })
}

/// One row of a ζ sweep: `R = ζI` and the largest `|λ0|` component of the final iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaRow {
    pub zeta: f64,
    pub max_abs_lambda0: f64,
}

/// Runs the full sweep once per `ζ` with `R = ζI`. Runs are independent and
/// execute on the rayon pool; rows come back in input order.
pub fn sweep_zeta(
    g: &NoirGraph,
    rm: &RoutingModel,
    spec: &CostSpec,
    x0: &DVector<f64>,
    opts: &SweepOptions,
    zetas: &[f64],
) -> Result<Vec<ZetaRow>, SweepError> {
    if zetas.is_empty() {
        return Err(SweepError::InvalidInput("ζ list is empty".into()));
    }
    zetas
        .par_iter()
        .map(|&zeta| {
            if !(zeta >= 0.0 && zeta.is_finite()) {
                return Err(SweepError::InvalidInput(format!("ζ must be non-negative, got {zeta}")));
            }
            let state = run_sweep(g, rm, &spec.with_uniform_r(zeta)?, x0, opts)?;
            Ok(ZetaRow { zeta, max_abs_lambda0: state.lambda0.amax() })
        })
        .collect()
}
