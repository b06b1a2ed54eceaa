//! Sample-and-hold feedback from a value-function approximation.
//!
//! At each partition point the input minimizing `grad v . f_i + L_i` over
//! the input box is computed and held until either the hold budget (the
//! partition diameter) runs out or the state leaves the current cell.

pub mod integrator;
pub mod static_min;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::Polynomial;
use crate::problem::{classify_cell, ProblemError, PwaOcp, TOL_GUARD};
pub use integrator::{integrate_hold, HoldExit, HoldResult, IntegratorConfig};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at {at:?}")]
    NonFinite { what: &'static str, at: Vec<f64> },
    #[error("integrator step underflow at t = {t}, x = {x:?}")]
    StepUnderflow { t: f64, x: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Anything that can supply `v(x)` and `grad v(x)`.
pub trait ValueGradient: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// A polynomial value function with its gradient precomputed.
#[derive(Clone, Debug)]
pub struct PolyValue {
    v: Polynomial,
    grad: Vec<Polynomial>,
}

impl PolyValue {
    pub fn new(v: Polynomial) -> Self {
        let grad = v.gradient(v.nvars());
        PolyValue { v, grad }
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.v
    }
}

impl ValueGradient for PolyValue {
    fn value(&self, x: &[f64]) -> f64 {
        self.v.eval_at(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval_at(x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Longest hold interval.
    pub diameter: f64,
    /// Stop once `|x - x_T| <= epsilon`.
    pub epsilon: f64,
    pub max_steps: usize,
    pub integrator: IntegratorConfig,
    /// Bisection tolerance for guard crossings, in state norm.
    pub event_tol: f64,
    /// Boundary re-classifications allowed within one diameter before the
    /// run is declared chattering.
    pub max_reclassifications: usize,
}

impl PolicyConfig {
    pub fn new(diameter: f64, epsilon: f64) -> Self {
        PolicyConfig {
            diameter,
            epsilon,
            max_steps: 100_000,
            integrator: IntegratorConfig::default(),
            event_tol: (1e-6 * diameter).min(1e-12),
            max_reclassifications: 100,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |s: &str| Err(PolicyError::Config(s.to_string()));
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return bad("diameter must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.event_tol > 0.0 && self.event_tol <= 1e-6 * self.diameter) {
            return bad("event_tol must lie in (0, 1e-6 * diameter]");
        }
        let i = &self.integrator;
        if !(i.rel_tol > 0.0 && i.abs_tol > 0.0 && i.min_step > 0.0 && i.max_step >= i.min_step) {
            return bad("integrator tolerances and steps must be positive with max_step >= min_step");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub cell: usize,
    pub u: Vec<f64>,
    pub hamiltonian_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: Vec<f64>,
    /// Index of the partition interval the sample belongs to.
    pub interval: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    ReachedTarget,
    MaxSteps,
    LeftDomain,
    /// Too many boundary re-classifications within one diameter.
    Chattering,
}

#[derive(Clone, Debug, Serialize)]
pub struct PolicyRun {
    pub status: RunStatus,
    pub points: Vec<PartitionPoint>,
    pub samples: Vec<TrajectorySample>,
    pub total_time: f64,
    pub cost: f64,
    pub final_state: Vec<f64>,
    pub terminal_cost: f64,
    pub diagnostics: Option<String>,
}

impl PolicyRun {
    pub fn steps(&self) -> usize {
        self.points.len()
    }
}

/// Minimizes `q(u) = grad v(x) . f_i(x, u) + L_i(x, u)` over the input box.
pub fn static_min(
    v: &dyn ValueGradient,
    ocp: &PwaOcp,
    cell: usize,
    x: &[f64],
) -> Result<(Vec<f64>, f64), PolicyError> {
    let c = &ocp.cells[cell];
    let p = v.gradient(x);
    if p.len() != ocp.n {
        return Err(PolicyError::Dimension(format!("value gradient has {} entries, state has {}", p.len(), ocp.n)));
    }
    let q = static_min::hamiltonian_in_u(c, x, &p)?;
    static_min::minimize_over_box(&q, &ocp.input_box)
}

/// Runs the sample-and-hold loop from `x0` until `|x - target| <= epsilon`.
pub fn run_policy(
    ocp: &PwaOcp,
    v: &dyn ValueGradient,
    x0: &[f64],
    target: &[f64],
    cfg: &PolicyConfig,
) -> Result<PolicyRun, PolicyError> {
    cfg.validate()?;
    if x0.len() != ocp.n || target.len() != ocp.n {
        return Err(PolicyError::Dimension(format!("initial state and target need {} entries", ocp.n)));
    }
    let dist = |x: &[f64]| x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut cost = 0.0;
    let mut points = Vec::new();
    let mut samples = Vec::new();
    let mut u_prev = ocp.input_box.iter().map(|iv| iv.clamp(0.0)).collect::<Vec<_>>();
    let mut window_start = 0.0;
    let mut reclass = 0usize;
    let mut diagnostics = None;
    let status = loop {
        if dist(&x) <= cfg.epsilon {
            break RunStatus::ReachedTarget;
        }
        if points.len() >= cfg.max_steps {
            break RunStatus::MaxSteps;
        }
        if !ocp.in_state_box(&x, TOL_GUARD) {
            diagnostics = Some(format!("state {x:?} outside the state box at t = {t}"));
            break RunStatus::LeftDomain;
        }
        let cell = classify_cell(ocp, &x, &u_prev)?;
        let (u, h) = static_min(v, ocp, cell, &x)?;
        let j = points.len();
        points.push(PartitionPoint { t, x: x.clone(), cell, u: u.clone(), hamiltonian_value: h });
        let hold = integrate_hold(ocp, cell, &x, &u, t, cfg.diameter, cfg)?;
        for (ts, xs) in &hold.samples {
            samples.push(TrajectorySample { t: *ts, x: xs.clone(), interval: j });
        }
        cost += hold.cost;
        t = hold.t_end;
        x = hold.x_end;
        u_prev = u;
        match hold.exit {
            HoldExit::BudgetExhausted => {
                reclass = 0;
                window_start = t;
            }
            HoldExit::BoundaryHit { .. } => {
                if t - window_start >= cfg.diameter {
                    reclass = 0;
                    window_start = t;
                }
                reclass += 1;
                if reclass > cfg.max_reclassifications {
                    diagnostics = Some(format!(
                        "{reclass} boundary re-classifications within one diameter near x = {x:?}, t = {t}"
                    ));
                    break RunStatus::Chattering;
                }
            }
            HoldExit::DomainExit => {
                diagnostics = Some(format!("trajectory reached the state-box edge at x = {x:?}, t = {t}"));
                break RunStatus::LeftDomain;
            }
        }
    };
    if samples.is_empty() {
        samples.push(TrajectorySample { t, x: x.clone(), interval: 0 });
    }
    let terminal_cost = ocp.terminal_cost.eval_at(&x);
    Ok(PolicyRun {
        status,
        points,
        samples,
        total_time: t,
        cost: cost + terminal_cost,
        final_state: x,
        terminal_cost,
        diagnostics,
    })
}

/// Recomputes the run's cost from its dense samples: trapezoid rule of the
/// running cost within each interval plus the terminal cost.
pub fn accumulated_cost(run: &PolicyRun, ocp: &PwaOcp) -> f64 {
    let mut total = 0.0;
    for w in run.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.interval != b.interval {
            continue;
        }
        let p = &run.points[a.interval];
        let l = &ocp.cells[p.cell].lagrangian;
        let za: Vec<f64> = a.x.iter().chain(&p.u).copied().collect();
        let zb: Vec<f64> = b.x.iter().chain(&p.u).copied().collect();
        total += 0.5 * (b.t - a.t) * (l.eval_at(&za) + l.eval_at(&zb));
    }
    let x_end = &run.samples.last().expect("at least one sample").x;
    total + ocp.terminal_cost.eval_at(x_end)
}

/// Trajectory CSV: one row per dense sample with the held input, the active
/// cell, the cumulative running cost, and a flag on partition points.
pub fn write_trajectory_csv<W: Write>(run: &PolicyRun, ocp: &PwaOcp, mut out: W) -> std::io::Result<()> {
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=ocp.n).map(|i| format!("x{i}")));
    header.extend((1..=ocp.m).map(|i| format!("u{i}")));
    header.extend(["cell".into(), "running_cost".into(), "partition_point".into()]);
    writeln!(out, "{}", header.join(","))?;
    let mut running = 0.0;
    for (k, s) in run.samples.iter().enumerate() {
        let Some(p) = run.points.get(s.interval) else {
            // zero-step run
            let row: Vec<String> = std::iter::once(s.t).chain(s.x.iter().copied()).map(|v| v.to_string()).collect();
            writeln!(out, "{},{},,0,1", row.join(","), vec![""; ocp.m].join(","))?;
            continue;
        };
        if k > 0 && run.samples[k - 1].interval == s.interval {
            let a = &run.samples[k - 1];
            let l = &ocp.cells[p.cell].lagrangian;
            let za: Vec<f64> = a.x.iter().chain(&p.u).copied().collect();
            let zb: Vec<f64> = s.x.iter().chain(&p.u).copied().collect();
            running += 0.5 * (s.t - a.t) * (l.eval_at(&za) + l.eval_at(&zb));
        }
        let first = k == 0 || run.samples[k - 1].interval != s.interval;
        let mut row: Vec<String> = vec![s.t.to_string()];
        row.extend(s.x.iter().map(|v| v.to_string()));
        row.extend(p.u.iter().map(|v| v.to_string()));
        row.push(p.cell.to_string());
        row.push(running.to_string());
        row.push(if first { "1".into() } else { "0".into() });
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::state_input_names;
    use crate::problem::builtin_example;

    fn exact_cell0() -> PolyValue {
        let c = 3f64.sqrt() - 1.0;
        PolyValue::new(Polynomial::parse(&format!("{c}*(x1 - 1)^2"), &state_input_names(1, 0)).unwrap())
    }

    #[test]
    fn static_min_at_target_is_zero() {
        let ocp = builtin_example();
        let (u, h) = static_min(&exact_cell0(), &ocp, 0, &[1.0]).unwrap();
        assert_eq!(u, vec![0.0]);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn start_at_target_takes_no_steps() {
        let ocp = builtin_example();
        let run = run_policy(&ocp, &exact_cell0(), &[1.0], &[1.0], &PolicyConfig::new(0.01, 0.01)).unwrap();
        assert_eq!(run.status, RunStatus::ReachedTarget);
        assert_eq!(run.steps(), 0);
        assert_eq!(run.cost, 0.0);
        assert_eq!(accumulated_cost(&run, &ocp), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::new(0.01, 0.01).validate().is_ok());
        assert!(PolicyConfig::new(0.0, 0.01).validate().is_err());
        assert!(PolicyConfig::new(0.01, -1.0).validate().is_err());
        let mut c = PolicyConfig::new(0.01, 0.01);
        c.event_tol = 1e-7;
        assert!(c.validate().is_err());
    }
}
