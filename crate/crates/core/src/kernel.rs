//! Matrix exponential and state-transition propagation of the coupled
//! state/co-state system.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dd::{self, Dd, DdMatrix, DdVec};
use crate::dynamics::LtiTraffic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("grid index {index} is outside 0..={last}")]
    IndexOutOfGrid { index: usize, last: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("propagation interval must be non-negative, got {0}")]
    NegativeInterval(f64),
    #[error("Padé denominator is singular")]
    SingularPade,
}

// Padé coefficients b_0..b_m for degrees 3, 5, 7, 9 and 13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the degree-m approximant is accurate to unit roundoff.
const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.53939833006323e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068e0)];
const THETA13: f64 = 5.371920351148152e0;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
///
/// The degree is picked from {3, 5, 7, 9, 13} by comparing the 1-norm with
/// the backward-error thresholds of the corresponding approximant; above the
/// degree-13 threshold the matrix is scaled by `2^-s` and the result squared
/// `s` times.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, KernelError> {
    if !m.is_square() {
        return Err(KernelError::DimensionMismatch(format!(
            "expm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite("expm input"));
    }
    let n = m.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = norm1(m);

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(m, coeffs, &ident);
            return pade_solve(&u, &v);
        }
    }

    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = m * 2f64.powi(-s);
    let (u, v) = pade13(&scaled, &ident);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite("expm result"));
    }
    Ok(r)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64], ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let a2 = a * a;
    let mut odd = ident * b[1];
    let mut even = ident * b[0];
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        odd += &power * b[2 * k + 1];
        even += &power * b[2 * k];
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    (u, v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>, KernelError> {
    (v - u).lu().solve(&(v + u)).ok_or(KernelError::SingularPade)
}

/// Uniform time grid `t0 + k·dt`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, n: usize) -> Result<Self, KernelError> {
        if !(t0.is_finite() && tf.is_finite()) || tf <= t0 {
            return Err(KernelError::InvalidGrid(format!("need finite t0 < tf, got [{t0}, {tf}]")));
        }
        if n < 2 {
            return Err(KernelError::InvalidGrid(format!("need at least 2 steps, got {n}")));
        }
        Ok(TimeGrid { t0, tf, n })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    /// Number of steps; the grid has `steps() + 1` points.
    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.n + 1
    }

    pub fn dt(&self) -> f64 {
        (self.tf - self.t0) / self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n {
            self.tf
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }
}

/// `A_sys = [[A, 0], [−R, −Aᵀ]]` and `B_sys = [[B], [0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    a_sys: DMatrix<f64>,
    b_sys: DMatrix<f64>,
    states: usize,
}

impl AugmentedSystem {
    pub fn new(a: &DMatrix<f64>, r: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self, KernelError> {
        let n = a.nrows();
        if !a.is_square() || r.shape() != (n, n) || b.nrows() != n {
            return Err(KernelError::DimensionMismatch(format!(
                "A {:?}, R {:?}, B {:?}",
                a.shape(),
                r.shape(),
                b.shape()
            )));
        }
        let mut a_sys = DMatrix::zeros(2 * n, 2 * n);
        a_sys.view_mut((0, 0), (n, n)).copy_from(a);
        a_sys.view_mut((n, 0), (n, n)).copy_from(&(-r));
        a_sys.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
        let mut b_sys = DMatrix::zeros(2 * n, b.ncols());
        b_sys.view_mut((0, 0), (n, b.ncols())).copy_from(b);
        Ok(AugmentedSystem { a_sys, b_sys, states: n })
    }

    /// Builds the system for the traffic model with a diagonal density weight `r`.
    pub fn from_traffic(sys: &LtiTraffic, r: &DVector<f64>) -> Result<Self, KernelError> {
        Self::new(&sys.a, &DMatrix::from_diagonal(r), &sys.b)
    }

    pub fn a_sys(&self) -> &DMatrix<f64> {
        &self.a_sys
    }

    pub fn b_sys(&self) -> &DMatrix<f64> {
        &self.b_sys
    }

    /// Dimension of `x` (half of the stacked dimension).
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn inputs(&self) -> usize {
        self.b_sys.ncols()
    }
}

/// The four blocks of `Φ(Δ) = e^{A_sys Δ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlocks {
    pub phi11: DMatrix<f64>,
    pub phi12: DMatrix<f64>,
    pub phi21: DMatrix<f64>,
    pub phi22: DMatrix<f64>,
}

impl TransitionBlocks {
    fn split(phi: &DMatrix<f64>, n: usize) -> Self {
        TransitionBlocks {
            phi11: phi.view((0, 0), (n, n)).into_owned(),
            phi12: phi.view((0, n), (n, n)).into_owned(),
            phi21: phi.view((n, 0), (n, n)).into_owned(),
            phi22: phi.view((n, n), (n, n)).into_owned(),
        }
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.phi11.nrows();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.phi11);
        m.view_mut((0, n), (n, n)).copy_from(&self.phi12);
        m.view_mut((n, 0), (n, n)).copy_from(&self.phi21);
        m.view_mut((n, n), (n, n)).copy_from(&self.phi22);
        m
    }
}

pub fn phi_blocks(sys: &AugmentedSystem, delta: f64) -> Result<TransitionBlocks, KernelError> {
    if delta.is_nan() || delta < 0.0 {
        return Err(KernelError::NegativeInterval(delta));
    }
    let phi = expm(&(sys.a_sys() * delta))?;
    Ok(TransitionBlocks::split(&phi, sys.states()))
}

/// One-step propagator on a fixed grid.
///
/// `Φ(dt)` is computed once; a step is `z ← Φ(dt) z + dt/2 (Φ(dt) B_sys u_k + B_sys u_{k+1})`,
/// which composes to the composite trapezoidal rule for the forced response.
/// Accumulation is carried out in double-double so the growing co-state
/// modes do not amplify roundoff.
#[derive(Debug, Clone)]
pub struct Propagator {
    phi_dt: DMatrix<f64>,
    phi_b: DMatrix<f64>,
    b_sys: DMatrix<f64>,
    grid: TimeGrid,
    states: usize,
}

impl Propagator {
    pub fn new(sys: &AugmentedSystem, grid: TimeGrid) -> Result<Self, KernelError> {
        let phi_dt = expm(&(sys.a_sys() * grid.dt()))?;
        let phi_b = &phi_dt * sys.b_sys();
        Ok(Propagator { phi_dt, phi_b, b_sys: sys.b_sys().clone(), grid, states: sys.states() })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn phi_dt(&self) -> &DMatrix<f64> {
        &self.phi_dt
    }

    pub(crate) fn check_controls(&self, u: &[DVector<f64>], upto: usize) -> Result<(), KernelError> {
        if upto > self.grid.steps() {
            return Err(KernelError::IndexOutOfGrid { index: upto, last: self.grid.steps() });
        }
        if u.len() <= upto {
            return Err(KernelError::DimensionMismatch(format!(
                "control trajectory has {} points, need {}",
                u.len(),
                upto + 1
            )));
        }
        for (k, uk) in u[..=upto].iter().enumerate() {
            if uk.len() != self.b_sys.ncols() {
                return Err(KernelError::DimensionMismatch(format!(
                    "control at grid point {k} has {} entries, expected {}",
                    uk.len(),
                    self.b_sys.ncols()
                )));
            }
            if uk.iter().any(|v| !v.is_finite()) {
                return Err(KernelError::NonFinite("control trajectory"));
            }
        }
        Ok(())
    }

    fn step(&self, z: &[Dd], u_k: &DVector<f64>, u_next: &DVector<f64>) -> DdVec {
        let h = 0.5 * self.grid.dt();
        let mut next = dd::mat_vec(&self.phi_dt, z);
        let forced = &self.phi_b * (u_k * h) + &self.b_sys * (u_next * h);
        for (o, f) in next.iter_mut().zip(forced.iter()) {
            *o = *o + Dd::from_f64(*f);
        }
        next
    }

    fn run_dd(&self, z0: DdVec, u: &[DVector<f64>], upto: usize, keep: bool) -> (DdVec, Vec<DVector<f64>>) {
        let mut traj = Vec::new();
        if keep {
            traj.reserve(upto + 1);
            traj.push(dd::to_dvector(&z0));
        }
        let mut z = z0;
        for k in 0..upto {
            z = self.step(&z, &u[k], &u[k + 1]);
            if keep {
                traj.push(dd::to_dvector(&z));
            }
        }
        (z, traj)
    }

    /// Stacked trajectory at every grid point starting from `z0`.
    pub fn propagate(&self, z0: &DVector<f64>, u: &[DVector<f64>]) -> Result<Vec<DVector<f64>>, KernelError> {
        if z0.len() != 2 * self.states {
            return Err(KernelError::DimensionMismatch(format!(
                "stacked state has {} entries, expected {}",
                z0.len(),
                2 * self.states
            )));
        }
        if z0.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite("initial stacked state"));
        }
        self.check_controls(u, self.grid.steps())?;
        Ok(self.run_dd(dd::from_dvector(z0), u, self.grid.steps(), true).1)
    }

    /// Forced response `Ψ(t_k, t0)` at grid index `k`.
    pub fn psi(&self, u: &[DVector<f64>], k: usize) -> Result<DVector<f64>, KernelError> {
        self.check_controls(u, k)?;
        let (z, _) = self.run_dd(vec![Dd::ZERO; 2 * self.states], u, k, false);
        Ok(dd::to_dvector(&z))
    }

    /// Lower (co-state) half of the terminal stacked vector from `(x0, λ0)`.
    pub(crate) fn terminal_costate(&self, x0: &DVector<f64>, lambda0: &[Dd], u: &[DVector<f64>]) -> DdVec {
        let mut z0 = dd::from_dvector(x0);
        z0.extend_from_slice(lambda0);
        let (z, _) = self.run_dd(z0, u, self.grid.steps(), false);
        z[self.states..].to_vec()
    }

    /// `Φ22` over the whole horizon, consistent with the step recursion.
    pub(crate) fn phi22_horizon(&self) -> DdMatrix {
        let n = self.states;
        let block = self.phi_dt.view((n, n), (n, n)).into_owned();
        DdMatrix::from_f64(&block).pow(self.grid.steps())
    }

    /// Stacked trajectory from `(x0, λ0)` with a double-double `λ0`.
    pub(crate) fn propagate_split(
        &self,
        x0: &DVector<f64>,
        lambda0: &[Dd],
        u: &[DVector<f64>],
    ) -> (Vec<DVector<f64>>, DdVec) {
        let mut z0 = dd::from_dvector(x0);
        z0.extend_from_slice(lambda0);
        let (z, traj) = self.run_dd(z0, u, self.grid.steps(), true);
        (traj, z[self.states..].to_vec())
    }
}

/// Forced response `∫_{t0}^{t_k} Φ(t_k, ε) B_sys u(ε) dε` by the composite trapezoidal rule.
pub fn psi_forced(
    sys: &AugmentedSystem,
    u: &[DVector<f64>],
    grid: TimeGrid,
    t_index: usize,
) -> Result<DVector<f64>, KernelError> {
    Propagator::new(sys, grid)?.psi(u, t_index)
}

/// `x_sys(t_k) = Φ(t_k, t0) x_sys(t0) + Ψ(t_k, t0)` at every grid point.
pub fn propagate(
    sys: &AugmentedSystem,
    x_sys0: &DVector<f64>,
    u: &[DVector<f64>],
    grid: TimeGrid,
) -> Result<Vec<DVector<f64>>, KernelError> {
    Propagator::new(sys, grid)?.propagate(x_sys0, u)
}
