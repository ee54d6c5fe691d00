use fracobstacle::benchmarks;
use fracobstacle::discretization::{build_operator, Grid};
use fracobstacle::kernel::KernelSpec;
use fracobstacle::oracle::*;
use fracobstacle::penalty::{step_implicit, NewtonOptions, PenaltyShape, PenaltySpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn agrees_with_a_sharp_penalty_step() {
    let p = benchmarks::b1();
    let op = build_operator(&p.grid, &p.kernel).unwrap();
    let dt = p.dt();
    let prev = p.initial_slice();
    let psi = p.obstacle_at(dt);
    let lcp = step_lcp(&op, &prev, &psi, dt, &PsorOptions::default()).unwrap();
    let spec = PenaltySpec::new(1e-6, 5000.0, PenaltyShape::MonotoneBounded).unwrap();
    let pen = step_implicit(&op, &prev, &psi, &p.obstacle_at(0.0), &spec, dt, &NewtonOptions::default()).unwrap();
    let diff = lcp.u.iter().zip(&pen.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-4, "{diff}");
}

#[test]
fn inactive_obstacle_matches_a_dense_linear_solve() {
    let grid = Grid::interval(-1.0, 1.0, 48).unwrap();
    let op = build_operator(&grid, &KernelSpec::pure(0.8, 1).unwrap()).unwrap();
    let n = grid.len();
    let dt = 0.01;
    let prev: Vec<f64> = grid.all_coords().iter().map(|x| (-4.0 * x[0] * x[0]).exp()).collect();
    let psi = vec![-100.0; n];
    let opts = PsorOptions {
        tol: 1e-12,
        ..PsorOptions::default()
    };
    let step = step_lcp(&op, &prev, &psi, dt, &opts).unwrap();
    let a = DMatrix::identity(n, n) - DMatrix::from_row_slice(n, n, &op.to_dense()) * dt;
    let exact = a.lu().solve(&DVector::from_column_slice(&prev)).unwrap();
    for i in 0..n {
        assert!((step.u[i] - exact[i]).abs() <= 1e-8);
    }
}

#[test]
fn b1_complementarity_and_exact_obstacle() {
    let p = benchmarks::b1();
    let run = solve_vi(&p, &PsorOptions::default()).unwrap();
    let report = complementarity_residual(&run.field, &p).unwrap();
    assert!(report.max_term() <= 1e-7, "{report:?}");
    assert_eq!(report.max_violation_u, 0.0);
    assert_eq!(run.sweeps.len(), p.n_steps);
}

#[test]
fn error_reports_the_time_index() {
    let p = benchmarks::b1();
    let opts = PsorOptions {
        max_sweeps: 1,
        check_every: 1,
        tol: 1e-14,
        ..PsorOptions::default()
    };
    match solve_vi(&p, &opts).unwrap_err() {
        fracobstacle::Error::Oracle { time_index, .. } => assert_eq!(time_index, 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn options_read_from_partial_json() {
    let o: PsorOptions = serde_json::from_str(r#"{"omega": 1.2}"#).unwrap();
    assert_eq!(o.omega, 1.2);
    assert_eq!(o.check_every, PsorOptions::default().check_every);
    assert!(serde_json::from_str::<PsorOptions>(r#"{"omga": 1.2}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauss_seidel_residual_history_does_not_increase(height in 0.0f64..1.0, slope in -1.0f64..1.0, dt in 1e-3f64..0.05) {
        let grid = Grid::interval(-1.0, 1.0, 32).unwrap();
        let op = build_operator(&grid, &KernelSpec::pure(1.3, 1).unwrap()).unwrap();
        let coords = grid.all_coords();
        let prev: Vec<f64> = coords.iter().map(|x| 0.5 * (1.0 - x[0] * x[0]) + 0.1 * slope * x[0]).collect();
        let psi: Vec<f64> = coords.iter().map(|x| height - 2.0 * x[0] * x[0]).collect();
        // Over-relaxed sweeps can raise the natural residual for a sweep or two,
        // so the monotone history is only asserted for projected Gauss-Seidel.
        let opts = PsorOptions { check_every: 1, omega: 1.0, ..PsorOptions::default() };
        let step = step_lcp(&op, &prev, &psi, dt, &opts).unwrap();
        prop_assert!(step.u.iter().zip(&psi).all(|(u, q)| u >= q));
        for w in step.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", step.history);
        }
    }
}
