mod common;

use nalgebra::{DMatrix, DVector};
use noir_core::dynamics::LtiTraffic;
use noir_core::kernel::{expm, phi_blocks, propagate, AugmentedSystem, Propagator, TimeGrid};
use proptest::prelude::*;

use common::*;

fn matrix(n: usize, bound: f64) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
        let m = DMatrix::from_vec(n, n, v);
        let norm = m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max).max(1e-12);
        m * (bound / norm)
    })
}

/// Classical RK4 on `ẋ = Ax + Bu(t)` with `u` linearly interpolated between
/// grid points and `sub` substeps per grid interval.
fn rk4(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x0: &DVector<f64>,
    u: &[DVector<f64>],
    dt: f64,
    sub: usize,
) -> Vec<DVector<f64>> {
    let h = dt / sub as f64;
    let mut out = vec![x0.clone()];
    let mut x = x0.clone();
    for k in 0..u.len() - 1 {
        let at = |s: f64| &u[k] * (1.0 - s) + &u[k + 1] * s;
        for j in 0..sub {
            let s0 = j as f64 / sub as f64;
            let s1 = (j as f64 + 0.5) / sub as f64;
            let s2 = (j + 1) as f64 / sub as f64;
            let f = |x: &DVector<f64>, s: f64| a * x + b * at(s);
            let k1 = f(&x, s0);
            let k2 = f(&(&x + &k1 * (h / 2.0)), s1);
            let k3 = f(&(&x + &k2 * (h / 2.0)), s1);
            let k4 = f(&(&x + &k3 * h), s2);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        out.push(x.clone());
    }
    out
}

fn junction_state_system() -> (LtiTraffic, AugmentedSystem, DVector<f64>) {
    let s = fixture("junction.scenario");
    let lti = LtiTraffic::assemble(&s.graph, &s.routing);
    let sys = AugmentedSystem::from_traffic(&lti, &DVector::zeros(lti.n_states())).unwrap();
    (lti, sys, s.x0)
}

fn stacked(x0: &DVector<f64>) -> DVector<f64> {
    let n = x0.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x0[i] } else { 0.0 })
}

#[test]
fn free_response_matches_rk4_on_junction() {
    let (lti, sys, x0) = junction_state_system();
    let grid = TimeGrid::new(0.0, 20.0, 2000).unwrap();
    let u = vec![DVector::zeros(4); 2001];
    let traj = propagate(&sys, &stacked(&x0), &u, grid).unwrap();
    let oracle = rk4(&lti.a, &lti.b, &x0, &u, grid.dt(), 10);
    let err = traj.iter().zip(&oracle).map(|(z, x)| (z.rows(0, 13) - x).amax()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
    assert!(traj.iter().all(|z| z.rows(13, 13).amax() == 0.0));
}

#[test]
fn forced_response_converges_to_rk4_at_second_order() {
    let (lti, sys, x0) = junction_state_system();
    let error = |steps: usize| {
        let grid = TimeGrid::new(0.0, 20.0, steps).unwrap();
        let u: Vec<DVector<f64>> = (0..=steps)
            .map(|k| {
                let t = grid.time(k);
                DVector::from_vec(vec![5.0 + t.sin(), 5.0 - t.sin(), 5.0 + (0.5 * t).cos(), 5.0 - (0.5 * t).cos()])
            })
            .collect();
        let traj = propagate(&sys, &stacked(&x0), &u, grid).unwrap();
        let oracle = rk4(&lti.a, &lti.b, &x0, &u, grid.dt(), 10);
        traj.iter().zip(&oracle).map(|(z, x)| (z.rows(0, 13) - x).amax()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (error(1000), error(2000));
    assert!(fine <= 1e-3, "{fine}");
    assert!((coarse / fine - 4.0).abs() < 0.2, "{coarse} / {fine}");
}

#[test]
fn restart_matches_single_propagation() {
    let s = fixture("junction.scenario");
    let lti = LtiTraffic::assemble(&s.graph, &s.routing);
    let sys = AugmentedSystem::from_traffic(&lti, s.cost.r()).unwrap();
    let grid = TimeGrid::new(0.0, 4.0, 400).unwrap();
    let u: Vec<DVector<f64>> = (0..=400).map(|k| DVector::from_element(4, 5.0 + (k as f64 * 0.01).sin())).collect();
    let z0 = DVector::from_fn(26, |i, _| if i < 13 { 10.0 } else { 0.1 * i as f64 });
    let whole = propagate(&sys, &z0, &u, grid).unwrap();

    let split = 150;
    let first = TimeGrid::new(0.0, grid.time(split), split).unwrap();
    let second = TimeGrid::new(grid.time(split), 4.0, 400 - split).unwrap();
    let head = propagate(&sys, &z0, &u[..=split], first).unwrap();
    let tail = propagate(&sys, &head[split], &u[split..], second).unwrap();
    for (k, z) in tail.iter().enumerate() {
        let reference = &whole[split + k];
        let scale = reference.amax().max(1.0);
        assert!((z - reference).amax() <= 1e-9 * scale, "grid point {}", split + k);
    }
}

#[test]
fn propagator_reuses_one_step_matrix() {
    let (_, sys, _) = junction_state_system();
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let p = Propagator::new(&sys, grid).unwrap();
    let direct = expm(&(sys.a_sys() * 0.1)).unwrap();
    assert!((p.phi_dt() - direct).amax() == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_matches_taylor(m in matrix(6, 2.0)) {
        let err = (expm(&m).unwrap() - expm_taylor(&m)).amax();
        prop_assert!(err <= 1e-10, "{}", err);
    }

    #[test]
    fn liouville(m in matrix(5, 3.0)) {
        let det = expm(&m).unwrap().determinant();
        let expected = m.trace().exp();
        prop_assert!(((det - expected) / expected).abs() <= 1e-8);
    }

    #[test]
    fn transition_determinant_is_one(a in matrix(4, 2.0), r in proptest::collection::vec(0.0..2.0f64, 4), delta in 0.0..3.0f64) {
        let sys = AugmentedSystem::new(&a, &DMatrix::from_diagonal(&DVector::from_vec(r)), &DMatrix::identity(4, 2)).unwrap();
        let det = phi_blocks(&sys, delta).unwrap().assemble().determinant();
        prop_assert!((det - 1.0).abs() <= 1e-8, "{}", det);
    }

    #[test]
    fn semigroup(a in matrix(4, 2.0), delta in 0.0..2.0f64) {
        let sys = AugmentedSystem::new(&a, &DMatrix::identity(4, 4), &DMatrix::identity(4, 1)).unwrap();
        let once = phi_blocks(&sys, delta).unwrap().assemble();
        let twice = phi_blocks(&sys, 2.0 * delta).unwrap().assemble();
        let scale = twice.amax().max(1.0);
        prop_assert!((&once * &once - twice).amax() <= 1e-10 * scale);
    }

    #[test]
    fn upper_right_block_vanishes(a in matrix(4, 2.0), delta in 0.0..3.0f64) {
        let sys = AugmentedSystem::new(&a, &DMatrix::identity(4, 4), &DMatrix::identity(4, 1)).unwrap();
        let blocks = phi_blocks(&sys, delta).unwrap();
        let scale = blocks.assemble().amax().max(1.0);
        prop_assert!(blocks.phi12.amax() <= 1e-14 * scale, "{}", blocks.phi12.amax());
    }

    #[test]
    fn state_stays_nonnegative(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g = random_network(&mut rng, 15);
        let rm = random_routing(&g, &mut rng);
        let lti = LtiTraffic::assemble(&g, &rm);
        let n = lti.n_states();
        let sys = AugmentedSystem::from_traffic(&lti, &DVector::zeros(n)).unwrap();
        let grid = TimeGrid::new(0.0, 10.0, 200).unwrap();
        let u: Vec<DVector<f64>> = (0..=200)
            .map(|k| DVector::from_fn(g.n_inlets(), |j, _| if (k + j) % 3 == 0 { 0.0 } else { 1.0 + j as f64 }))
            .collect();
        let z0 = DVector::from_fn(2 * n, |i, _| if i < n && i % 2 == 0 { 3.0 } else { 0.0 });
        for z in propagate(&sys, &z0, &u, grid).unwrap() {
            prop_assert!(z.rows(0, n).min() >= -1e-9);
        }
    }
}
