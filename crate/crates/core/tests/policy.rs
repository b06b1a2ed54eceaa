use proptest::prelude::*;
use pwamc::bench::{analytic_feedback, oracle_cost, AnalyticValueFunction};
use pwamc::polynomial::{state_input_names, Polynomial};
use pwamc::policy::static_min::{hamiltonian_in_u, minimize_over_box};
use pwamc::policy::{
    accumulated_cost, integrate_hold, run_policy, static_min, write_trajectory_csv, HoldExit, PolicyConfig, PolicyRun,
    PolyValue, RunStatus, TrajectorySample,
};
use pwamc::problem::{Interval, PwaOcp};
use pwamc::relaxation::{solve_order, RelaxationOptions};
use pwamc::builtin_example;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_cell0_value() -> PolyValue {
    let c = 3f64.sqrt() - 1.0;
    PolyValue::new(Polynomial::parse(&format!("{c}*(x1 - 1)^2"), &state_input_names(1, 0)).unwrap())
}

fn d4_value(ocp: &PwaOcp) -> PolyValue {
    PolyValue::new(solve_order(ocp, 4, &RelaxationOptions::default()).unwrap().value.v)
}

#[test]
fn static_min_interior_and_boundary() {
    let names = state_input_names(0, 1);
    let q = Polynomial::parse("0.6*u1 + u1^2", &names).unwrap();
    let (u, v) = minimize_over_box(&q, &[Interval::new(-4.0, 4.0)]).unwrap();
    assert!((u[0] + 0.3).abs() < 1e-15 && (v + 0.09).abs() < 1e-15);
    let q = Polynomial::parse("2*u1 + 0.1*u1^3", &names).unwrap();
    let (u, _) = minimize_over_box(&q, &[Interval::new(-1.0, 1.0)]).unwrap();
    assert_eq!(u, vec![-1.0]);
}

#[test]
fn static_min_recovers_analytic_feedback_on_cell_zero() {
    let ocp = builtin_example();
    let v = exact_cell0_value();
    let (u, _) = static_min(&v, &ocp, 0, &[1.0]).unwrap();
    assert_eq!(u, vec![0.0]);
    for k in 0..=20 {
        let x = 0.1 * k as f64;
        let (u, _) = static_min(&v, &ocp, 0, &[x]).unwrap();
        assert!((u[0] - analytic_feedback(x)).abs() <= 1e-12);
    }
}

#[test]
fn integrator_matches_affine_closed_form() {
    let ocp = builtin_example();
    let cfg = PolicyConfig::new(0.5, 0.01);
    let r = integrate_hold(&ocp, 0, &[2.0], &[0.0], 0.0, 0.5, &cfg).unwrap();
    assert_eq!(r.exit, HoldExit::BudgetExhausted);
    assert!((r.x_end[0] - (1.0 + (-0.5f64).exp())).abs() <= 1e-8);
    for (t, x) in &r.samples {
        assert!((x[0] - (1.0 + (-t).exp())).abs() <= 1e-8);
    }
}

#[test]
fn boundary_crossing_is_located() {
    let ocp = builtin_example();
    let cfg = PolicyConfig::new(1.0, 0.01);
    // cell 1: x' = x + 1 + u, with u = 1 the state rises from -0.5
    let r = integrate_hold(&ocp, 1, &[-0.5], &[1.0], 0.0, 1.0, &cfg).unwrap();
    assert_eq!(r.exit, HoldExit::BoundaryHit { guard: 0 });
    assert!(r.x_end[0].abs() <= 1e-9);
    // x(t) = -2 + 1.5 e^t reaches 0 at ln(4/3)
    assert!((r.t_end - (4.0f64 / 3.0).ln()).abs() <= 1e-9);
}

#[test]
fn budget_is_not_overshot() {
    let ocp = builtin_example();
    let cfg = PolicyConfig::new(0.01, 0.01);
    let r = integrate_hold(&ocp, 0, &[1.5], &[0.2], 3.0, 0.01, &cfg).unwrap();
    assert_eq!(r.exit, HoldExit::BudgetExhausted);
    assert!((r.t_end - 3.01).abs() <= cfg.event_tol);
}

fn check_run_invariants(run: &PolicyRun, ocp: &PwaOcp, cfg: &PolicyConfig) {
    for w in run.points.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].t - w[0].t <= cfg.diameter + cfg.event_tol);
    }
    for p in &run.points {
        assert!(ocp.input_box.iter().zip(&p.u).all(|(iv, &u)| iv.contains(u, 0.0)));
    }
    for s in &run.samples {
        let p = &run.points[s.interval];
        let z: Vec<f64> = s.x.iter().chain(&p.u).copied().collect();
        for g in &ocp.cells[p.cell].guards {
            assert!(g.eval_at(&z) >= -10.0 * cfg.event_tol, "sample {s:?} outside cell {}", p.cell);
        }
    }
    let samples_by_interval = |j: usize| run.samples.iter().filter(move |s: &&TrajectorySample| s.interval == j);
    for (j, p) in run.points.iter().enumerate() {
        let first = samples_by_interval(j).next().unwrap();
        assert_eq!(first.t, p.t);
        assert_eq!(first.x, p.x);
    }
    assert!((accumulated_cost(run, ocp) - run.cost).abs() <= 1e-9);
}

#[test]
fn synthesized_run_from_minus_one() {
    let ocp = builtin_example();
    let cfg = PolicyConfig::new(0.01, 0.01);
    let run = run_policy(&ocp, &d4_value(&ocp), &[-1.0], &[1.0], &cfg).unwrap();
    assert_eq!(run.status, RunStatus::ReachedTarget);
    check_run_invariants(&run, &ocp, &cfg);
    let changes = run.points.windows(2).filter(|w| w[0].cell != w[1].cell).count();
    assert_eq!(changes, 1);
    let xs: Vec<f64> = run.points.iter().map(|p| p.x[0]).collect();
    assert!(xs.windows(2).all(|w| w[1] > w[0]));
    let oracle = oracle_cost(-1.0, 1e-10).unwrap();
    assert!((run.cost - oracle).abs() <= 0.1 * oracle);
}

#[test]
fn halving_the_diameter_does_not_hurt() {
    let ocp = builtin_example();
    let v = d4_value(&ocp);
    let oracle = oracle_cost(-1.0, 1e-10).unwrap();
    let coarse = run_policy(&ocp, &v, &[-1.0], &[1.0], &PolicyConfig::new(0.01, 0.01)).unwrap();
    let fine = run_policy(&ocp, &v, &[-1.0], &[1.0], &PolicyConfig::new(0.005, 0.01)).unwrap();
    assert!((fine.cost - oracle).abs() <= (coarse.cost - oracle).abs() + 1e-3);
}

#[test]
fn start_at_target_and_resting_state() {
    let ocp = builtin_example();
    let v = exact_cell0_value();
    let run = run_policy(&ocp, &v, &[1.0], &[1.0], &PolicyConfig::new(0.01, 0.01)).unwrap();
    assert_eq!((run.status, run.steps(), run.cost), (RunStatus::ReachedTarget, 0, 0.0));
    assert_eq!(accumulated_cost(&run, &ocp), 0.0);
    // resting at x = 1 with u = 0 for a long time costs nothing
    let r = integrate_hold(&ocp, 0, &[1.0], &[0.0], 0.0, 5.0, &PolicyConfig::new(5.0, 0.01)).unwrap();
    assert_eq!(r.cost, 0.0);
}

#[test]
fn max_steps_and_left_domain() {
    let ocp = builtin_example();
    let mut cfg = PolicyConfig::new(0.01, 1e-3);
    cfg.max_steps = 5;
    let run = run_policy(&ocp, &exact_cell0_value(), &[0.5], &[1.0], &cfg).unwrap();
    assert_eq!(run.status, RunStatus::MaxSteps);
    assert_eq!(run.steps(), 5);
    // a value function rewarding large x drives the state into the box edge
    let push = PolyValue::new(Polynomial::parse("-10*x1", &state_input_names(1, 0)).unwrap());
    let run = run_policy(&ocp, &push, &[1.5], &[-1.0], &PolicyConfig::new(0.5, 0.01)).unwrap();
    assert_eq!(run.status, RunStatus::LeftDomain);
    assert!(run.diagnostics.is_some());
}

#[test]
fn trajectory_csv_layout() {
    let ocp = builtin_example();
    let run = run_policy(&ocp, &exact_cell0_value(), &[0.5], &[1.0], &PolicyConfig::new(0.1, 0.1)).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&run, &ocp, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,u1,cell,running_cost,partition_point");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), run.samples.len());
    assert!(rows.iter().all(|r| r.len() == 6));
    let flagged = rows.iter().filter(|r| r[5] == "1").count();
    assert_eq!(flagged, run.steps());
    let last: f64 = rows.last().unwrap()[4].parse().unwrap();
    assert!((last - run.cost).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn partition_points_are_certified_minima(x in -2.0f64..2.0, seed in any::<u64>()) {
        let ocp = builtin_example();
        let v = d4_value_cached();
        let cell = if x >= 0.0 { 0 } else { 1 };
        let (u, h) = static_min(v, &ocp, cell, &[x]).unwrap();
        prop_assert!(ocp.input_box[0].contains(u[0], 0.0));
        let q = hamiltonian_in_u(&ocp.cells[cell], &[x], &pwamc::policy::ValueGradient::gradient(v, &[x])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let ur = rng.random_range(-4.0..=4.0);
            prop_assert!(h <= q.eval_at(&[ur]) + 1e-9);
        }
    }

    // below about -1.42 the analytic feedback leaves the input box
    #[test]
    fn analytic_value_reproduces_feedback(x in -1.4f64..2.0) {
        let ocp = builtin_example();
        let cell = if x >= 0.0 { 0 } else { 1 };
        let (u, _) = static_min(&AnalyticValueFunction, &ocp, cell, &[x]).unwrap();
        prop_assert!((u[0] - analytic_feedback(x)).abs() <= 1e-9);
    }
}

fn d4_value_cached() -> &'static PolyValue {
    static V: std::sync::OnceLock<PolyValue> = std::sync::OnceLock::new();
    V.get_or_init(|| d4_value(&builtin_example()))
}
