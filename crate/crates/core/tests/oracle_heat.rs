use dfc_core::oracle::{
    heat_discretize, heat_forcing, heat_initial_profile, heat_optimal_control, riccati_solve,
};
use dfc_core::sde::TimeGrid;
use nalgebra::{DMatrix, DVector};

#[test]
fn three_node_pure_diffusion_stencil() {
    let sys = heat_discretize(1.0, 0.0, 1.0, 1.0, 3).unwrap();
    let want = DMatrix::from_row_slice(3, 3, &[-8.0, 4.0, 0.0, 4.0, -8.0, 4.0, 0.0, 4.0, -8.0]);
    assert_eq!(sys.a, want);
    assert_eq!(sys.h, 0.5);
    assert_eq!(sys.b.diagonal().as_slice(), &[0.0, 1.0, 0.0]);
}

#[test]
fn pure_diffusion_is_symmetric_with_conservative_interior_rows() {
    let sys = heat_discretize(0.3, 0.0, 1.0, 1.0, 9).unwrap();
    assert_eq!(sys.a, sys.a.transpose());
    for i in 1..8 {
        assert!(sys.a.row(i).sum().abs() < 1e-12);
    }
}

#[test]
fn advection_uses_backward_difference() {
    let sys = heat_discretize(0.0, 2.0, 1.0, 1.0, 5).unwrap();
    // (b/h)(P_i − P_{i−1}) with h = 1/4
    assert_eq!(sys.a[(2, 2)], 8.0);
    assert_eq!(sys.a[(2, 1)], -8.0);
    assert_eq!(sys.a[(2, 3)], 0.0);
}

#[test]
fn inputs_vanish_on_the_boundary() {
    let sys = heat_discretize(5e-5, 5e-5, 2.0, 3.0, 21).unwrap();
    assert_eq!(sys.b[(0, 0)], 0.0);
    assert_eq!(sys.b[(20, 20)], 0.0);
    assert_eq!(sys.b[(10, 10)], 2.0);
    assert_eq!(sys.c[(10, 10)], 3.0);
    assert!(heat_discretize(1.0, 0.0, 1.0, 1.0, 2).is_err());
}

#[test]
fn riccati_without_dynamics_is_linear_in_time() {
    let n = 3;
    let zero = DMatrix::zeros(n, n);
    let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 3.0]);
    let k = DMatrix::identity(n, n) * 0.7;
    let grid = TimeGrid::new(0.0, 1.5, 30).unwrap();
    let sol = riccati_solve(&zero, &zero, &DMatrix::identity(n, n), &q, &k, &grid).unwrap();
    for i in 0..=30 {
        let want = &k + &q * (1.5 - grid.node(i));
        assert!((sol.at(i) - want).amax() < 1e-12);
    }
}

#[test]
fn scalar_riccati_matches_tanh_solution() {
    let one = DMatrix::identity(1, 1);
    let zero = DMatrix::zeros(1, 1);
    let k = DMatrix::from_element(1, 1, 0.25);
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    let sol = riccati_solve(&zero, &one, &one, &one, &k, &grid).unwrap();
    let c = 0.25f64.atanh();
    for i in 0..=50 {
        let want = (1.0 - grid.node(i) + c).tanh();
        assert!((sol.at(i)[(0, 0)] - want).abs() < 1e-6);
    }
}

#[test]
fn heat_riccati_stays_symmetric_positive_semidefinite() {
    let sys = heat_discretize(5e-5, 5e-5, 1.0, 1.0, 21).unwrap();
    let id = DMatrix::identity(21, 21);
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    let sol = riccati_solve(&sys.a, &sys.b, &id, &id, &id, &grid).unwrap();
    for g in &sol.g {
        assert_eq!(g, &g.transpose());
        let min = g.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-12, "{min}");
    }
}

#[test]
fn riccati_blowup_is_reported() {
    let a = DMatrix::from_element(1, 1, 0.0);
    let b = DMatrix::from_element(1, 1, 1.0);
    let r = DMatrix::from_element(1, 1, 1.0);
    let q = DMatrix::from_element(1, 1, 0.0);
    // dG/ds = −G² from a negative terminal value explodes in finite time
    let k = DMatrix::from_element(1, 1, -5.0);
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    assert!(riccati_solve(&a, &b, &r, &q, &k, &grid).is_err());
}

#[test]
fn control_formula_scales_and_vanishes() {
    let n = 5;
    let sys = heat_discretize(0.1, 0.1, 1.0, 1.0, n).unwrap();
    let g = DMatrix::from_fn(n, n, |i, j| if i == j { 1.5 } else { 0.1 });
    let p = DVector::from_vec(vec![0.0, 1.0, 2.0, 1.0, 0.0]);
    let f = DVector::from_vec(heat_forcing(n, 0.3));
    let r = DMatrix::identity(n, n);
    let zero = heat_optimal_control(
        &DMatrix::zeros(n, n),
        &p,
        &DVector::zeros(n),
        &r,
        &sys.b,
        1.0,
        1.0,
    )
    .unwrap();
    assert_eq!(zero.amax(), 0.0);
    let u1 = heat_optimal_control(&g, &p, &f, &r, &sys.b, 1.0, 1.0).unwrap();
    let u2 = heat_optimal_control(&g, &p, &f, &r, &sys.b, 2.0, 1.0).unwrap();
    assert!((u1 * 0.5 - u2).amax() < 1e-15);
}

#[test]
fn riccati_feedback_beats_zero_control_on_heat_setup() {
    let n = 21;
    let sys = heat_discretize(5e-5, 5e-5, 1.0, 1.0, n).unwrap();
    let id = DMatrix::identity(n, n);
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    let sol = riccati_solve(&sys.a, &sys.b, &id, &id, &id, &grid).unwrap();
    let cost = |feedback: bool| {
        let mut p = DVector::from_vec(heat_initial_profile(n));
        let dt = grid.dt();
        let mut j = 0.0;
        for k in 0..50 {
            let t = grid.node(k);
            let f = DVector::from_vec(heat_forcing(n, t));
            let u = if feedback {
                heat_optimal_control(sol.at(k), &p, &f, &id, &sys.b, 1.0, 1.0).unwrap()
            } else {
                DVector::zeros(n)
            };
            j += 0.5 * (p.norm_squared() + u.norm_squared()) * dt;
            p = &p + (&sys.a * &p + &sys.b * &u + &sys.c * &f) * dt;
        }
        j + 0.5 * p.norm_squared()
    };
    let (opt, zero) = (cost(true), cost(false));
    assert!(opt < zero, "{opt} vs {zero}");
}

#[test]
fn initial_profile_matches_closed_form() {
    let p = heat_initial_profile(21);
    assert_eq!(p[0], 0.0);
    assert!(p[20].abs() < 1e-12);
    let x = 0.5f64;
    assert!((p[10] - 100.0 * x * (1.0 - x) * (-x).exp()).abs() < 1e-12);
}
