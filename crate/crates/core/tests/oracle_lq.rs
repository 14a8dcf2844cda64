use dfc_core::oracle::{lq_costate, lq_exact_control, lq_fbode_solve, FbodeScheme, LqSpec};
use dfc_core::sde::TimeGrid;
use nalgebra::{DMatrix, DVector};

fn max_state_error(spec: &LqSpec, steps: usize) -> f64 {
    // forward Euler on dX/dt = A(u − r) with the closed-form costate
    let grid = TimeGrid::new(0.0, spec.horizon, steps).unwrap();
    let dt = grid.dt();
    let d = spec.dim();
    let mut x = DVector::zeros(d);
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t = grid.node(k);
        let u = lq_exact_control(spec, t, &spec.exact_costate(t)).unwrap();
        x += &spec.a * (u - spec.shift(t)) * dt;
        worst = worst.max((&x - spec.exact_state(grid.node(k + 1))).amax());
    }
    worst
}

#[test]
fn zero_costate_gives_zero_control() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let u = lq_exact_control(&spec, 0.3, &DVector::zeros(10)).unwrap();
    assert_eq!(u.amax(), 0.0);
}

#[test]
fn scalar_control_at_horizon() {
    let spec = LqSpec::benchmark(1, 0.1, 1.0).unwrap();
    let p = DVector::from_element(1, 0.7);
    let u = lq_exact_control(&spec, 1.0, &p).unwrap();
    assert!((u[0] + 0.7 / 1.01).abs() < 1e-15);
}

#[test]
fn deterministic_limit_divides_by_k() {
    let d = 3;
    let id = DMatrix::identity(d, d);
    let k = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 5.0]));
    let a = dfc_core::oracle::coupling_matrix(d, 1.0, 0.2);
    let spec = LqSpec::new(a.clone(), id.clone(), id.clone(), k.clone(), id, 0.0, 1.0).unwrap();
    let p = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let u = lq_exact_control(&spec, 0.4, &p).unwrap();
    let want = -(k.try_inverse().unwrap() * a * p);
    assert!((u - want).amax() < 1e-14);
}

#[test]
fn spec_rejects_non_symmetric_or_indefinite_matrices() {
    let id = DMatrix::<f64>::identity(2, 2);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(LqSpec::new(
        bad,
        id.clone(),
        id.clone(),
        id.clone(),
        id.clone(),
        0.1,
        1.0
    )
    .is_err());
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(LqSpec::new(id.clone(), id.clone(), indefinite, id.clone(), id, 0.1, 1.0).is_err());
}

#[test]
fn stationarity_holds_at_every_node() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    for k in 0..=50 {
        let t = grid.node(k);
        let p = spec.exact_costate(t);
        let u = lq_exact_control(&spec, t, &p).unwrap();
        let s2 = 0.01;
        // A p + u (σ²(T−t) + 1 + σ²) = 0 for identity weights
        let res = &spec.a * &p + &u * (s2 * (1.0 - t) + 1.0 + s2);
        assert!(
            res.amax() < 1e-12 * (1.0 + p.amax()),
            "node {k}: {}",
            res.amax()
        );
    }
}

#[test]
fn costate_is_zero_when_tracking_exactly_without_terminal_weight() {
    let d = 2;
    let id = DMatrix::<f64>::identity(d, d);
    let q = DMatrix::<f64>::identity(d, d) * 1e-300;
    let spec = LqSpec::new(id.clone(), id.clone(), id.clone(), id, q, 0.1, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let n = 5;
    let states: Vec<f64> = (n..=20)
        .flat_map(|i| {
            spec.target(grid.node(i))
                .iter()
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    let p = lq_costate(&spec, &grid, n, &states).unwrap();
    let qx = spec.target(1.0) * 1e-300;
    assert!((p - qx).amax() < 1e-12);
}

#[test]
fn unit_gap_in_ninth_component_integrates_to_remaining_time() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
    let n = 10;
    let mut states = Vec::new();
    for i in n..=40 {
        let mut x = spec.target(grid.node(i));
        x[8] += 1.0;
        if i == 40 {
            x = DVector::zeros(10);
        }
        states.extend(x.iter());
    }
    // the terminal node has zero state, so its tracking gap is −Y*(T) everywhere
    let p = lq_costate(&spec, &grid, n, &states).unwrap();
    let gap_t = -spec.target(1.0)[8];
    let dt = grid.dt();
    let want = (1.0 - grid.node(n)) - 0.5 * dt + 0.5 * dt * gap_t;
    assert!((p[8] - want).abs() < 1e-12, "{} vs {want}", p[8]);
}

#[test]
fn trapezoid_costate_converges_quadratically_to_closed_form() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let err = |steps: usize| {
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let n = steps / 4;
        let states: Vec<f64> = (n..=steps)
            .flat_map(|i| {
                spec.exact_state(grid.node(i))
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect();
        let p = lq_costate(&spec, &grid, n, &states).unwrap();
        (p - spec.exact_costate(grid.node(n))).amax()
    };
    let (e1, e2) = (err(40), err(80));
    assert!(e1 < 1e-2, "{e1}");
    let ratio = e1 / e2;
    assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
}

#[test]
fn euler_simulation_with_exact_control_reproduces_closed_form_path() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let e: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| max_state_error(&spec, n))
        .collect();
    assert!(e[2] < 0.05, "{e:?}");
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.8 && ratio < 2.2, "{e:?}");
    }
}

#[test]
fn fbode_residual_is_at_round_off() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    for scheme in [FbodeScheme::LeftSum, FbodeScheme::Discrete] {
        for n in [0, 17, 49] {
            let y = vec![0.3; 10];
            let sol = lq_fbode_solve(&spec, &grid, n, &y, scheme).unwrap();
            assert!(sol.residual < 1e-10, "{scheme:?} n={n}: {}", sol.residual);
            assert_eq!(sol.states.len(), (51 - n) * 10);
            assert_eq!(sol.controls.len(), (50 - n) * 10);
            assert_eq!(&sol.states[..10], &y[..]);
        }
    }
}

#[test]
fn fbode_from_origin_matches_closed_form_with_first_order_error() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let err = |steps: usize| {
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let sol = lq_fbode_solve(&spec, &grid, 0, &[0.0; 10], FbodeScheme::LeftSum).unwrap();
        (0..=steps)
            .map(|i| {
                let x = DVector::from_column_slice(&sol.states[i * 10..(i + 1) * 10]);
                (x - spec.exact_state(grid.node(i))).amax()
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(50), err(100));
    assert!(e2 < 0.1, "{e1} {e2}");
    let ratio = e1 / e2;
    assert!(ratio > 1.7 && ratio < 2.3, "ratio {ratio}");
}

#[test]
fn fbode_refinement_halves_solution_change() {
    let spec = LqSpec::benchmark(10, 0.1, 1.0).unwrap();
    let at_half = |steps: usize| {
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let sol = lq_fbode_solve(&spec, &grid, 0, &[0.0; 10], FbodeScheme::Discrete).unwrap();
        DVector::from_column_slice(&sol.states[(steps / 2) * 10..(steps / 2 + 1) * 10])
    };
    let (a, b, c) = (at_half(40), at_half(80), at_half(160));
    let ratio = (&a - &b).amax() / (&b - &c).amax();
    assert!(ratio > 1.7 && ratio < 2.3, "ratio {ratio}");
}

#[test]
fn fbode_decouples_for_large_noise() {
    let spec = LqSpec::benchmark(4, 1e4, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 30).unwrap();
    let sol = lq_fbode_solve(&spec, &grid, 0, &[0.2; 4], FbodeScheme::LeftSum).unwrap();
    let mut x = DVector::from_element(4, 0.2);
    for k in 0..30 {
        x -= &spec.a * spec.shift(grid.node(k)) * grid.dt();
    }
    let got = DVector::from_column_slice(&sol.states[30 * 4..]);
    assert!((got - x).amax() < 1e-6);
    assert!(sol.controls.iter().all(|u| u.abs() < 1e-6));
}

#[test]
fn fbode_rejects_terminal_start() {
    let spec = LqSpec::benchmark(2, 0.1, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    assert!(lq_fbode_solve(&spec, &grid, 10, &[0.0; 2], FbodeScheme::LeftSum).is_err());
    assert!(lq_fbode_solve(&spec, &grid, 0, &[0.0; 3], FbodeScheme::LeftSum).is_err());
}
