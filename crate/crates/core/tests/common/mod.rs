//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use noir_core::dynamics::RoutingModel;
use noir_core::graph::{GraphSpec, NoirGraph};
use noir_core::scenario::{load_scenario, Scenario};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> Scenario {
    load_scenario(fixture_path(name)).unwrap()
}

/// Random network with at most `max_roads` roads that satisfies both path
/// conditions: interior roads sit on a directed ring plus random chords,
/// every inlet feeds some interior road, every outlet drains one.
pub fn random_network(rng: &mut ChaCha8Rng, max_roads: usize) -> NoirGraph {
    let inlets = rng.random_range(1..=4);
    let outlets = rng.random_range(1..=4);
    let interior = rng.random_range(1..=max_roads - inlets - outlets);
    let first = inlets + outlets + 1;
    let last = inlets + outlets + interior;
    let mut edges = Vec::new();
    for i in first..=last {
        if interior > 1 {
            edges.push([i, if i == last { first } else { i + 1 }]);
        }
    }
    let chords = rng.random_range(0..=interior);
    for _ in 0..chords {
        let (a, b) = (rng.random_range(first..=last), rng.random_range(first..=last));
        if a != b && !edges.contains(&[a, b]) {
            edges.push([a, b]);
        }
    }
    for j in 1..=inlets {
        edges.push([j, rng.random_range(first..=last)]);
    }
    for o in inlets + 1..=inlets + outlets {
        edges.push([rng.random_range(first..=last), o]);
    }
    edges.shuffle(rng);
    NoirGraph::build(&GraphSpec { inlets, outlets, interior, edges }).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Transitive closure by Floyd–Warshall over all roads (1-based).
pub fn closure(g: &NoirGraph) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut c = vec![vec![false; n + 1]; n + 1];
    for (a, b) in g.edges() {
        c[a][b] = true;
    }
    for k in 1..=n {
        for i in 1..=n {
            if c[i][k] {
                for j in 1..=n {
                    if c[k][j] {
                        c[i][j] = true;
                    }
                }
            }
        }
    }
    c
}

/// `e^M` by 50 Taylor terms with Kahan-compensated accumulation.
pub fn expm_taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut comp = DMatrix::<f64>::zeros(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=50 {
        term = &term * m / k as f64;
        for idx in 0..n * n {
            let y = term[idx] - comp[idx];
            let t = sum[idx] + y;
            comp[idx] = (t - sum[idx]) - y;
            sum[idx] = t;
        }
    }
    sum
}

/// Minimizer of `½ uᵀWu + fᵀu` over the simplex by enumerating the first
/// `N − 1` coordinates on a grid of `step` and closing with the budget.
pub fn qp_grid_oracle(w: &[f64], f: &[f64], u0: f64, step: f64) -> Vec<f64> {
    let n = w.len();
    let objective = |u: &[f64]| -> f64 { (0..n).map(|i| 0.5 * w[i] * u[i] * u[i] + f[i] * u[i]).sum() };
    let ticks = (u0 / step).floor() as usize;
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut u = vec![0.0; n];
    let mut visit = |u: &mut Vec<f64>| {
        let used: f64 = u[..n - 1].iter().sum();
        if used > u0 + 1e-12 {
            return;
        }
        u[n - 1] = (u0 - used).max(0.0);
        let v = objective(u);
        if v < best.0 {
            best = (v, u.clone());
        }
    };
    match n {
        1 => visit(&mut u),
        2 => {
            for i in 0..=ticks {
                u[0] = i as f64 * step;
                visit(&mut u);
            }
        }
        3 => {
            for i in 0..=ticks {
                u[0] = i as f64 * step;
                for j in 0..=ticks - i {
                    u[1] = j as f64 * step;
                    visit(&mut u);
                }
            }
        }
        _ => panic!("grid oracle handles at most three inlets"),
    }
    best.1
}

/// `λ(0)` for `ẋ = −a x + u0`, `λ̇ = −r x + a λ`, `λ(T) = 0`.
pub fn scalar_lambda0(a: f64, r: f64, u0: f64, x0: f64, horizon: f64) -> f64 {
    let s = u0 / a;
    let lc = r * s / a;
    let k = r * (x0 - s) / (2.0 * a);
    let c = -(lc + k * (-a * horizon).exp()) * (-a * horizon).exp();
    lc + k + c
}

/// Central-difference `d/dt Σx` against inflow minus outlet outflow, worst case
/// over the interior grid points.
pub fn conservation_gap(x: &[DVector<f64>], u: &[DVector<f64>], rm: &RoutingModel, dt: f64) -> f64 {
    let total = |v: &DVector<f64>| v.sum();
    (1..x.len() - 1)
        .map(|k| {
            let derivative = (total(&x[k + 1]) - total(&x[k - 1])) / (2.0 * dt);
            let outflow: f64 = (0..x[k].len()).map(|i| rm.p()[i] * x[k][i] * rm.outlet_fraction()[i]).sum();
            (derivative - (u[k].sum() - outflow)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest change of any interior density over the tail of the run,
/// relative to its final value.
pub fn settling_deviation(x: &[DVector<f64>], tail_fraction: f64) -> f64 {
    let last = x.last().unwrap();
    let start = ((1.0 - tail_fraction) * (x.len() - 1) as f64).round() as usize;
    x[start..].iter().flat_map(|v| v.iter().zip(last.iter()).map(|(a, b)| (a - b).abs() / b.abs())).fold(0.0, f64::max)
}

pub fn random_routing(g: &NoirGraph, rng: &mut ChaCha8Rng) -> RoutingModel {
    RoutingModel::random(g, rng.random()).unwrap()
}
