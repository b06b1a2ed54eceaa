//! Closed-form optimal feedback and value function for the built-in
//! two-cell example, an integration oracle for its optimal cost, and the
//! comparison of relaxation and policy output against them.
//!
//! The example: `x' = -x + 1 + u` on `x >= 0`, `x' = x + 1 + u` on
//! `x <= 0`, running cost `2 (x - 1)^2 + u^2`, target `x = 1`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::policy::{PolicyRun, ValueGradient};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("initial state {0} outside [-2, 2]")]
    OutOfRange(f64),
    #[error("closed loop did not reach the target within time {0}")]
    NoConvergence(f64),
    #[error("run starts at {run} but the comparison uses x0 = {x0}")]
    InitialMismatch { run: f64, x0: f64 },
    #[error("run has no partition points")]
    EmptyRun,
}

/// Optimal feedback: `(1 - sqrt 3)(x - 1)` for `x >= 0`, and
/// `-x - 1 + sqrt(2 (x - 1)^2 + (x + 1)^2)` for `x < 0`.
pub fn analytic_feedback(x: f64) -> f64 {
    if x >= 0.0 {
        (1.0 - SQRT3) * (x - 1.0)
    } else {
        -x - 1.0 + (2.0 * (x - 1.0).powi(2) + (x + 1.0).powi(2)).sqrt()
    }
}

fn closed_loop(x: f64) -> f64 {
    let u = analytic_feedback(x);
    if x >= 0.0 {
        -x + 1.0 + u
    } else {
        x + 1.0 + u
    }
}

fn running_cost(x: f64) -> f64 {
    let u = analytic_feedback(x);
    2.0 * (x - 1.0).powi(2) + u * u
}

// antiderivative of sqrt(3 s^2 - 2 s + 3)
fn sqrt_quad_antiderivative(s: f64) -> f64 {
    let w = s - 1.0 / 3.0;
    let a2 = 8.0 / 9.0;
    let r = (w * w + a2).sqrt();
    SQRT3 * (0.5 * w * r + 0.5 * a2 * (w + r).ln())
}

/// The exact value function of the example and its derivative.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnalyticValueFunction;

impl AnalyticValueFunction {
    pub fn value_at(x: f64) -> f64 {
        if x >= 0.0 {
            (SQRT3 - 1.0) * (x - 1.0).powi(2)
        } else {
            let g = 2.0 * (sqrt_quad_antiderivative(0.0) - sqrt_quad_antiderivative(x));
            SQRT3 - 1.0 + g - 1.0 + (x + 1.0).powi(2)
        }
    }

    pub fn derivative_at(x: f64) -> f64 {
        if x >= 0.0 {
            2.0 * (SQRT3 - 1.0) * (x - 1.0)
        } else {
            2.0 * (x + 1.0) - 2.0 * (3.0 * x * x - 2.0 * x + 3.0).sqrt()
        }
    }
}

impl ValueGradient for AnalyticValueFunction {
    fn value(&self, x: &[f64]) -> f64 {
        Self::value_at(x[0])
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![Self::derivative_at(x[0])]
    }
}

/// RK4 on the augmented state `(x, J)` with fixed step `h`. A step that
/// would cross `x = 0` is replaced by one RK4 step in `x` as independent
/// variable landing exactly on the switching point.
fn integrate_closed_loop(x0: f64, h: f64, t_cap: f64) -> Result<f64, OracleError> {
    let field = |x: f64| (closed_loop(x), running_cost(x));
    let (mut x, mut j, mut t) = (x0, 0.0, 0.0);
    while (x - 1.0).abs() > 1e-8 {
        if t > t_cap {
            return Err(OracleError::NoConvergence(t_cap));
        }
        let k1 = field(x);
        let k2 = field(x + 0.5 * h * k1.0);
        let k3 = field(x + 0.5 * h * k2.0);
        let k4 = field(x + h * k3.0);
        let xn = x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        if x < 0.0 && xn >= 0.0 {
            // d(t, J)/dx = (1, L) / f
            let g = |s: f64| {
                let f = closed_loop(s);
                (1.0 / f, running_cost(s) / f)
            };
            let dx = -x;
            let a = g(x);
            let b = g(x + 0.5 * dx);
            let d = g(0.0);
            t += dx / 6.0 * (a.0 + 4.0 * b.0 + d.0);
            j += dx / 6.0 * (a.1 + 4.0 * b.1 + d.1);
            x = 0.0;
            continue;
        }
        j += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        x = xn;
        t += h;
    }
    // exact remaining cost from the final state
    Ok(j + AnalyticValueFunction::value_at(x))
}

/// Optimal cost from `x0`, by integrating the closed loop under the
/// analytic feedback and Richardson-extrapolating in the step size until
/// successive estimates agree within `tol`.
pub fn oracle_cost(x0: f64, tol: f64) -> Result<f64, OracleError> {
    if !(-2.0..=2.0).contains(&x0) {
        return Err(OracleError::OutOfRange(x0));
    }
    if (x0 - 1.0).abs() <= 1e-8 {
        return Ok(0.0);
    }
    let t_cap = 100.0;
    let mut h = 1e-2;
    let mut coarse = integrate_closed_loop(x0, h, t_cap)?;
    let mut prev_extrap: Option<f64> = None;
    loop {
        h *= 0.5;
        let fine = integrate_closed_loop(x0, h, t_cap)?;
        let extrap = (16.0 * fine - coarse) / 15.0;
        if let Some(p) = prev_extrap {
            if (extrap - p).abs() <= tol || h < 1e-6 {
                return Ok(extrap);
            }
        }
        prev_extrap = Some(extrap);
        coarse = fine;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointComparison {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub k_star: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundGap {
    pub d: u32,
    pub lower_bound: f64,
    pub bound_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub x0: f64,
    pub oracle_cost: f64,
    pub bounds: Vec<BoundGap>,
    /// Gap of the highest order.
    pub bound_gap: f64,
    pub policy_cost: f64,
    pub cost_gap: f64,
    pub feedback_sup_dev: f64,
    pub points: Vec<PointComparison>,
}

/// Compares hierarchy bounds `(d, lower_bound)` and a policy run on the
/// example against the oracle.
pub fn compare(bounds: &[(u32, f64)], run: &PolicyRun, x0: f64, oracle: f64) -> Result<ComparisonReport, OracleError> {
    let first = run.points.first().ok_or(OracleError::EmptyRun)?;
    if (first.x[0] - x0).abs() > 1e-12 {
        return Err(OracleError::InitialMismatch { run: first.x[0], x0 });
    }
    let points: Vec<PointComparison> = run
        .points
        .iter()
        .map(|p| {
            let k = analytic_feedback(p.x[0]);
            PointComparison { t: p.t, x: p.x[0], u: p.u[0], k_star: k, deviation: (p.u[0] - k).abs() }
        })
        .collect();
    let bounds: Vec<BoundGap> = bounds
        .iter()
        .map(|&(d, lb)| BoundGap { d, lower_bound: lb, bound_gap: oracle - lb })
        .collect();
    Ok(ComparisonReport {
        x0,
        oracle_cost: oracle,
        bound_gap: bounds.iter().max_by_key(|b| b.d).map_or(f64::NAN, |b| b.bound_gap),
        bounds,
        policy_cost: run.cost,
        cost_gap: run.cost - oracle,
        feedback_sup_dev: points.iter().map(|p| p.deviation).fold(0.0, f64::max),
        points,
    })
}

/// Two-column `x,k_star` samples of the analytic feedback on `[lo, hi]`.
pub fn write_feedback_curve<W: Write>(lo: f64, hi: f64, samples: usize, mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,k_star")?;
    for k in 0..samples {
        let x = lo + (hi - lo) * k as f64 / (samples.max(2) - 1) as f64;
        writeln!(out, "{x},{}", analytic_feedback(x))?;
    }
    Ok(())
}

/// Two-column `x,u_policy` pairs at the run's partition points.
pub fn write_policy_curve<W: Write>(run: &PolicyRun, mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,u_policy")?;
    for p in &run.points {
        writeln!(out, "{},{}", p.x[0], p.u[0])?;
    }
    Ok(())
}
