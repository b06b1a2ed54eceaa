//! Dormand-Prince 5(4) integration of one cell's dynamics under a held
//! input, stopping at the first guard crossing or when the hold budget runs
//! out.

use serde::{Deserialize, Serialize};

use super::{PolicyConfig, PolicyError};
use crate::polynomial::Polynomial;
use crate::problem::{box_guards, PwaOcp};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_step: f64,
    /// Also bounds the spacing of the cost quadrature.
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, min_step: 1e-14, max_step: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HoldExit {
    /// A guard of the current cell reached zero; index into `cell.guards`.
    BoundaryHit { guard: usize },
    /// The state reached the edge of the state box.
    DomainExit,
    BudgetExhausted,
}

#[derive(Clone, Debug)]
pub struct HoldResult {
    pub t_end: f64,
    pub x_end: Vec<f64>,
    pub exit: HoldExit,
    /// Accepted steps `(t, x)`, starting at `(t_j, x_j)` and ending at the
    /// exit point.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Trapezoid rule of the running cost over `samples`.
    pub cost: f64,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step of an autonomous field. Returns the fifth-order
/// solution and the embedded error estimate.
pub fn dopri_step(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut xs = x.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..n {
                    xs[i] += h * a * kj[i];
                }
            }
        }
        k.push(f(&xs));
    }
    let mut x5 = x.to_vec();
    let mut err = vec![0.0; n];
    for s in 0..7 {
        for i in 0..n {
            x5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    (x5, err)
}

fn err_norm(err: &[f64], x0: &[f64], x1: &[f64], cfg: &IntegratorConfig) -> f64 {
    err.iter()
        .zip(x0.iter().zip(x1))
        .map(|(e, (a, b))| e.abs() / (cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

struct Watch {
    guards: Vec<Polynomial>,
    /// Crossing thresholds; a guard that starts slightly negative (inside
    /// the classification tolerance) only triggers when it decreases.
    thresholds: Vec<f64>,
    user: usize,
}

impl Watch {
    fn first_violation(&self, z: &[f64]) -> Option<usize> {
        self.guards.iter().zip(&self.thresholds).position(|(g, &thr)| g.eval_at(z) < thr)
    }
}

/// Integrates `x' = A_i x + a_i + B_i u` from `(t_j, x_j)` for at most
/// `budget` time units, stopping at the first crossing of a cell guard or
/// state-box edge, located by bisection to `cfg.event_tol` in state norm.
pub fn integrate_hold(
    ocp: &PwaOcp,
    cell: usize,
    x_j: &[f64],
    u: &[f64],
    t_j: f64,
    budget: f64,
    cfg: &PolicyConfig,
) -> Result<HoldResult, PolicyError> {
    let c = &ocp.cells[cell];
    let (n, m) = (ocp.n, ocp.m);
    let icfg = &cfg.integrator;
    let field = |x: &[f64]| c.vector_field(x, u);
    let joint = |x: &[f64]| -> Vec<f64> { x.iter().chain(u).copied().collect() };
    let mut guards = c.guards.clone();
    let user = guards.len();
    guards.extend(box_guards(n + m, 0, &ocp.state_box));
    let z0 = joint(x_j);
    let thresholds = guards.iter().map(|g| g.eval_at(&z0).min(0.0)).collect();
    let watch = Watch { guards, thresholds, user };
    let running = |x: &[f64]| c.lagrangian.eval_at(&joint(x));

    let t_final = t_j + budget;
    let mut t = t_j;
    let mut x = x_j.to_vec();
    let mut samples = vec![(t, x.clone())];
    let mut h = icfg.max_step.min(budget);
    let mut exit = HoldExit::BudgetExhausted;
    while t < t_final {
        let remaining = t_final - t;
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        let (xn, err) = dopri_step(&field, &x, step);
        if xn.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite { what: "integrator state", at: x.clone() });
        }
        let e = err_norm(&err, &x, &xn, icfg);
        if e > 1.0 {
            h = step * (0.9 * e.powf(-0.2)).max(0.2);
            if h < icfg.min_step {
                return Err(PolicyError::StepUnderflow { t, x: x.clone() });
            }
            continue;
        }
        if let Some(k) = watch.first_violation(&joint(&xn)) {
            let (tc, xc, kc) = locate(&field, &watch, &joint, t, &x, step, k, cfg.event_tol);
            t = tc;
            x = xc;
            samples.push((t, x.clone()));
            exit = if kc < watch.user { HoldExit::BoundaryHit { guard: kc } } else { HoldExit::DomainExit };
            break;
        }
        t = if last { t_final } else { t + step };
        x = xn;
        samples.push((t, x.clone()));
        let grow = if e > 0.0 { (0.9 * e.powf(-0.2)).min(5.0) } else { 5.0 };
        h = (step * grow).min(icfg.max_step);
    }
    let cost = trapezoid(&samples, running);
    Ok(HoldResult { t_end: t, x_end: x, exit, samples, cost })
}

pub(crate) fn trapezoid(samples: &[(f64, Vec<f64>)], running: impl Fn(&[f64]) -> f64) -> f64 {
    let vals: Vec<f64> = samples.iter().map(|(_, x)| running(x)).collect();
    samples.windows(2).zip(vals.windows(2)).map(|(s, v)| 0.5 * (s[1].0 - s[0].0) * (v[0] + v[1])).sum()
}

/// Bisection on the step `[t, t + h]` for the first instant a watched guard
/// falls below its threshold. Returns the first point past the crossing.
#[allow(clippy::too_many_arguments)]
fn locate(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    watch: &Watch,
    joint: &dyn Fn(&[f64]) -> Vec<f64>,
    t: f64,
    x: &[f64],
    h: f64,
    mut guard: usize,
    tol: f64,
) -> (f64, Vec<f64>, usize) {
    let (mut lo, mut hi) = (0.0, h);
    let mut x_lo = x.to_vec();
    let mut x_hi = dopri_step(field, x, h).0;
    loop {
        let gap = x_lo.iter().zip(&x_hi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap <= tol || hi - lo <= f64::EPSILON * (t.abs() + h) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let xm = dopri_step(field, x, mid).0;
        match watch.first_violation(&joint(&xm)) {
            Some(k) => {
                hi = mid;
                x_hi = xm;
                guard = k;
            }
            None => {
                lo = mid;
                x_lo = xm;
            }
        }
    }
    (t + hi, x_hi, guard)
}
