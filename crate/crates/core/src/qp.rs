//! Per-step inlet allocation: minimize `½ uᵀWu + fᵀu` over
//! `{u ≥ 0, Σu = u0}` with diagonal `W`.
//!
//! The KKT conditions give `u_i(ν) = max(0, (ν − f_i) / w_i)` for a scalar
//! multiplier `ν`. `Σ u_i(ν)` is piecewise linear and increasing in `ν` with
//! breakpoints at the `f_i`, so `ν` is found exactly by walking the sorted
//! breakpoints.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("inlet weights must be positive and finite")]
    BadWeights,
    #[error("net inflow must be positive and finite, got {0}")]
    BadBudget(f64),
    #[error("non-finite linear coefficient")]
    NonFinite,
    #[error("weights and coefficients differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// One inlet allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct InletQp<'a> {
    pub w: &'a [f64],
    pub f: &'a [f64],
    pub u0: f64,
}

impl InletQp<'_> {
    fn validate(&self) -> Result<(), QpError> {
        if self.w.len() != self.f.len() {
            return Err(QpError::DimensionMismatch(self.w.len(), self.f.len()));
        }
        if self.w.is_empty() || self.w.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(QpError::BadWeights);
        }
        if !(self.u0 > 0.0 && self.u0.is_finite()) {
            return Err(QpError::BadBudget(self.u0));
        }
        if self.f.iter().any(|f| !f.is_finite()) {
            return Err(QpError::NonFinite);
        }
        Ok(())
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        u.iter().zip(self.w).zip(self.f).map(|((&u, &w), &f)| 0.5 * w * u * u + f * u).sum()
    }
}

/// Exact minimizer of the inlet allocation problem.
pub fn solve_inlet_qp(qp: &InletQp<'_>) -> Result<DVector<f64>, QpError> {
    qp.validate()?;
    let n = qp.w.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| qp.f[a].total_cmp(&qp.f[b]));

    // With the k cheapest inlets active: Σ (ν − f_i)/w_i = u0.
    let mut inv_w = 0.0;
    let mut f_over_w = 0.0;
    let mut nu = f64::NAN;
    for (k, &i) in order.iter().enumerate() {
        inv_w += 1.0 / qp.w[i];
        f_over_w += qp.f[i] / qp.w[i];
        nu = (qp.u0 + f_over_w) / inv_w;
        if k + 1 == n || nu <= qp.f[order[k + 1]] {
            break;
        }
    }

    let mut u = DVector::from_iterator(n, (0..n).map(|i| ((nu - qp.f[i]) / qp.w[i]).max(0.0)));
    // Put the summation roundoff on the largest entry so the budget holds to the last bit.
    let imax = u.iamax();
    let others: f64 = u.iter().enumerate().filter(|&(i, _)| i != imax).map(|(_, v)| v).sum();
    u[imax] = (qp.u0 - others).max(0.0);
    Ok(u)
}

/// Largest violation of the KKT conditions at `u`.
///
/// Covers primal feasibility (`|Σu − u0|`, `max(0, −u_i)`), stationarity
/// `w_i u_i + f_i = ν` on the support and dual feasibility `f_i ≥ ν` off it.
/// `ν` is the midrange of `w_i u_i + f_i` over the support, the value that
/// minimizes the worst stationarity gap.
pub fn kkt_residual(u: &[f64], qp: &InletQp<'_>) -> f64 {
    if u.len() != qp.w.len() || u.len() != qp.f.len() {
        return f64::INFINITY;
    }
    let budget = (u.iter().sum::<f64>() - qp.u0).abs();
    let negativity = u.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);

    let grads: Vec<f64> =
        u.iter().zip(qp.w).zip(qp.f).filter(|((&u, _), _)| u > 0.0).map(|((&u, &w), &f)| w * u + f).collect();
    if grads.is_empty() {
        return budget.max(negativity);
    }
    let lo = grads.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nu = 0.5 * (lo + hi);
    let stationarity = 0.5 * (hi - lo);
    let dual = u.iter().zip(qp.f).filter(|(&u, _)| u <= 0.0).map(|(_, &f)| (nu - f).max(0.0)).fold(0.0, f64::max);

    budget.max(negativity).max(stationarity).max(dual)
}
