//! Dense primal-dual interior-point solver for block-LMI programs
//!
//! ```text
//! minimize c'y  subject to  F y = g,  B_j + sum_a y_a A_{j,a} >= 0 (PSD)
//! ```
//!
//! with dual
//!
//! ```text
//! maximize g'l - sum_j <B_j, Z_j>  subject to  sum_j A_j^*(Z_j) + F'l = c,  Z_j >= 0.
//! ```
//!
//! The iteration itself runs in double-double arithmetic, see [`ipm`].

mod dd;
mod ipm;
mod sdpa;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

pub use sdpa::write_sdpa;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// One block `B + sum_a y_a A_a >= 0`. Coefficient matrices are stored as
/// upper-triangle entries `(i, j, value)` with `i <= j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiBlock {
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl LmiBlock {
    pub fn new(constant: DMatrix<f64>) -> Self {
        LmiBlock { constant, coeffs: Vec::new() }
    }

    pub fn side(&self) -> usize {
        self.constant.nrows()
    }

    /// `B + sum_a y_a A_a`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (var, entries) in &self.coeffs {
            for &(i, j, v) in entries {
                out[(i, j)] += y[*var] * v;
                if i != j {
                    out[(j, i)] += y[*var] * v;
                }
            }
        }
        out
    }

    /// `<A_a, X>` for every coefficient matrix of the block, accumulated
    /// into `out[a]`.
    pub fn adjoint_into(&self, x: &DMatrix<f64>, out: &mut [f64]) {
        for (var, entries) in &self.coeffs {
            let mut s = 0.0;
            for &(i, j, v) in entries {
                s += if i == j { v * x[(i, i)] } else { v * (x[(i, j)] + x[(j, i)]) };
            }
            out[*var] += s;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub nvar: usize,
    pub objective: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl ConicProgram {
    pub fn new(nvar: usize) -> Self {
        ConicProgram {
            nvar,
            objective: vec![0.0; nvar],
            eq_matrix: DMatrix::zeros(0, nvar),
            eq_rhs: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let r = self.eq_matrix.nrows();
        let mut m = std::mem::replace(&mut self.eq_matrix, DMatrix::zeros(0, 0)).insert_row(r, 0.0);
        for &(k, v) in coeffs {
            m[(r, k)] += v;
        }
        self.eq_matrix = m;
        self.eq_rhs.push(rhs);
    }

    pub fn add_block(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    /// `constant + sum coeff * y >= 0` as a 1x1 block.
    pub fn add_scalar_inequality(&mut self, constant: f64, coeffs: &[(usize, f64)]) {
        let mut b = LmiBlock::new(DMatrix::from_element(1, 1, constant));
        for &(k, v) in coeffs {
            b.coeffs.push((k, vec![(0, 0, v)]));
        }
        self.blocks.push(b);
    }

    /// `y_var >= lower`.
    pub fn add_lower_bound(&mut self, var: usize, lower: f64) {
        self.add_scalar_inequality(-lower, &[(var, 1.0)]);
    }

    pub fn num_equalities(&self) -> usize {
        self.eq_matrix.nrows()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |s: String| Err(SdpError::Malformed(s));
        if self.objective.len() != self.nvar {
            return bad(format!("objective length {} != nvar {}", self.objective.len(), self.nvar));
        }
        if self.eq_matrix.ncols() != self.nvar || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return bad("equality dimensions".into());
        }
        let finite = self.objective.iter().chain(self.eq_matrix.iter()).chain(&self.eq_rhs).all(|v| v.is_finite());
        if !finite {
            return bad("non-finite data".into());
        }
        for (j, b) in self.blocks.iter().enumerate() {
            let n = b.side();
            if b.constant.ncols() != n || n == 0 {
                return bad(format!("block {j}: constant must be square and nonempty"));
            }
            if (&b.constant - b.constant.transpose()).amax() > 0.0 {
                return bad(format!("block {j}: constant not symmetric"));
            }
            for (var, entries) in &b.coeffs {
                if *var >= self.nvar {
                    return bad(format!("block {j}: variable {var} out of range"));
                }
                if entries.iter().any(|&(i, k, v)| i > k || k >= n || !v.is_finite()) {
                    return bad(format!("block {j}: entries must be finite upper-triangle indices"));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub removed_zero_rows: Vec<usize>,
    pub removed_dependent_rows: Vec<usize>,
    /// First row found to contradict the others, if any.
    pub inconsistent_row: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    /// One multiplier per original equality row; removed rows get zero.
    pub eq_multipliers: Vec<f64>,
    pub block_duals: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `primal_objective - dual_objective`.
    pub gap: f64,
    pub iterations: usize,
    /// `||F y - g||_inf` at the returned point.
    pub primal_infeasibility: f64,
    /// `||c - F'l - A^*(Z)||_inf` at the returned point.
    pub dual_infeasibility: f64,
    /// Largest of the scaled stopping measures at the returned point.
    pub merit: f64,
    /// Iterates on which the infeasibility-corrected duality gap was
    /// negative beyond rounding.
    pub weak_duality_violations: usize,
    pub preprocess: PreprocessReport,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_iter: 200 }
    }
}

/// Drops zero rows and rows linearly dependent on earlier ones (modified
/// Gram-Schmidt with reorthogonalization, which is a rank-revealing QR of
/// `F'` taken in row order).
pub fn preprocess(p: &ConicProgram) -> (ConicProgram, PreprocessReport) {
    let rows = p.eq_matrix.nrows();
    let mut report = PreprocessReport::default();
    let scale_g = p.eq_rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut basis: Vec<(nalgebra::DVector<f64>, usize)> = Vec::new();
    let mut kept = Vec::new();
    for r in 0..rows {
        let row = p.eq_matrix.row(r).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            report.removed_zero_rows.push(r);
            if p.eq_rhs[r] != 0.0 && report.inconsistent_row.is_none() {
                report.inconsistent_row = Some(r);
            }
            continue;
        }
        let mut w = row.clone();
        for _ in 0..2 {
            for (q, _) in &basis {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        if w.norm() > 1e-10 * norm {
            let q = &w / w.norm();
            basis.push((q, r));
            kept.push(r);
        } else {
            report.removed_dependent_rows.push(r);
            // least-squares combination of the kept rows reproducing row r
            let k = kept.len();
            let fk = DMatrix::from_fn(k, p.nvar, |i, j| p.eq_matrix[(kept[i], j)]);
            let coef = fk
                .transpose()
                .svd(true, true)
                .solve(&row, 1e-14)
                .expect("svd solve");
            let pred: f64 = kept.iter().zip(coef.iter()).map(|(&i, c)| c * p.eq_rhs[i]).sum();
            if (pred - p.eq_rhs[r]).abs() > 1e-9 * scale_g && report.inconsistent_row.is_none() {
                report.inconsistent_row = Some(r);
            }
        }
    }
    let eq_matrix = DMatrix::from_fn(kept.len(), p.nvar, |i, j| p.eq_matrix[(kept[i], j)]);
    let eq_rhs = kept.iter().map(|&r| p.eq_rhs[r]).collect();
    let out = ConicProgram {
        nvar: p.nvar,
        objective: p.objective.clone(),
        eq_matrix,
        eq_rhs,
        blocks: p.blocks.clone(),
    };
    (out, report)
}

/// Solves the program. Data errors are reported as `Err`; numerical
/// outcomes are reported through [`SolveStatus`].
pub fn solve(p: &ConicProgram, tol: f64, max_iter: usize) -> Result<ConicSolution, SdpError> {
    if !(tol > 0.0) {
        return Err(SdpError::BadTolerance);
    }
    p.validate()?;
    let (clean, report) = preprocess(p);
    let kept: Vec<usize> = (0..p.num_equalities())
        .filter(|r| !report.removed_zero_rows.contains(r) && !report.removed_dependent_rows.contains(r))
        .collect();
    if report.inconsistent_row.is_some() {
        let y = vec![0.0; p.nvar];
        let mut sol = finish(p, SolveStatus::PrimalInfeasible, y, vec![0.0; p.num_equalities()], p
            .blocks
            .iter()
            .map(|b| DMatrix::zeros(b.side(), b.side()))
            .collect(), 0, f64::INFINITY, 0);
        sol.preprocess = report;
        return Ok(sol);
    }
    let out = ipm::run(&clean, SolveOptions { tol, max_iter });
    let mut lambda = vec![0.0; p.num_equalities()];
    for (k, &r) in kept.iter().enumerate() {
        lambda[r] = out.lambda[k];
    }
    let mut sol = finish(p, out.status, out.y, lambda, out.z, out.iterations, out.merit, out.weak_duality_violations);
    sol.preprocess = report;
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &ConicProgram,
    status: SolveStatus,
    y: Vec<f64>,
    lambda: Vec<f64>,
    z: Vec<DMatrix<f64>>,
    iterations: usize,
    merit: f64,
    weak_duality_violations: usize,
) -> ConicSolution {
    let primal_objective = p.objective_value(&y);
    let dual_objective = lambda.iter().zip(&p.eq_rhs).map(|(l, g)| l * g).sum::<f64>()
        - p.blocks.iter().zip(&z).map(|(b, z)| b.constant.dot(z)).sum::<f64>();
    let primal_infeasibility = eq_residual(p, &y);
    let dual_infeasibility = dual_residual(p, &lambda, &z);
    ConicSolution {
        status,
        y,
        eq_multipliers: lambda,
        block_duals: z,
        primal_objective,
        dual_objective,
        gap: primal_objective - dual_objective,
        iterations,
        primal_infeasibility,
        dual_infeasibility,
        merit,
        weak_duality_violations,
        preprocess: PreprocessReport::default(),
    }
}

fn eq_residual(p: &ConicProgram, y: &[f64]) -> f64 {
    (0..p.num_equalities()).fold(0.0f64, |acc, r| {
        let v: f64 = (0..p.nvar).map(|k| p.eq_matrix[(r, k)] * y[k]).sum::<f64>() - p.eq_rhs[r];
        acc.max(v.abs())
    })
}

fn dual_residual(p: &ConicProgram, lambda: &[f64], z: &[DMatrix<f64>]) -> f64 {
    let mut r = p.objective.clone();
    for (row, l) in lambda.iter().enumerate() {
        for k in 0..p.nvar {
            r[k] -= p.eq_matrix[(row, k)] * l;
        }
    }
    let mut adj = vec![0.0; p.nvar];
    for (b, zj) in p.blocks.iter().zip(z) {
        b.adjoint_into(zj, &mut adj);
    }
    r.iter().zip(&adj).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
}

/// Residuals recomputed from scratch in plain `f64`.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub eq_residual: f64,
    pub block_min_eigenvalues: Vec<f64>,
    pub dual_residual: f64,
    pub dual_min_eigenvalues: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    /// `<B_j + A_j(y), Z_j>` per block.
    pub complementarity: Vec<f64>,
}

pub fn residuals(p: &ConicProgram, s: &ConicSolution) -> ResidualReport {
    let min_eig = |m: DMatrix<f64>| SymmetricEigen::new(m).eigenvalues.min();
    let slacks: Vec<DMatrix<f64>> = p.blocks.iter().map(|b| b.evaluate(&s.y)).collect();
    let primal_objective = p.objective_value(&s.y);
    let dual_objective = s.eq_multipliers.iter().zip(&p.eq_rhs).map(|(l, g)| l * g).sum::<f64>()
        - p.blocks.iter().zip(&s.block_duals).map(|(b, z)| b.constant.dot(z)).sum::<f64>();
    ResidualReport {
        eq_residual: eq_residual(p, &s.y),
        block_min_eigenvalues: slacks.iter().cloned().map(min_eig).collect(),
        dual_residual: dual_residual(p, &s.eq_multipliers, &s.block_duals),
        dual_min_eigenvalues: s.block_duals.iter().cloned().map(min_eig).collect(),
        primal_objective,
        dual_objective,
        gap: primal_objective - dual_objective,
        complementarity: slacks.iter().zip(&s.block_duals).map(|(x, z)| x.dot(z)).collect(),
    }
}
