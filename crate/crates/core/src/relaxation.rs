//! Order-`d` moment relaxation of the occupation-measure LP, its solution,
//! and the value-function approximation read off the equality multipliers.
//!
//! Measures: one local measure per cell over `(x, u)` and one terminal
//! measure over `x`. For each test monomial `x^b` with `|b| <= 2d` there is
//! one equality row
//!
//! ```text
//! sum_i l_{y_i}(F_i(x^b)) + l_{y_T}(x^b) = l_{y_0}(x^b),
//! ```
//!
//! and the multiplier of that row is the coefficient of `x^b` in `v_d`.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{analytic_moments, MatrixTemplate, MomentBasis, MomentError, TemplateCache};
use crate::polynomial::{monomials_up_to, Monomial, PolyError, Polynomial};
use crate::problem::{lie_map, PwaOcp, Scaling, TOL_GUARD};
use crate::sdp::{self, ConicProgram, ConicSolution, LmiBlock, SdpError, SolveStatus};

#[derive(Debug, Error)]
pub enum RelaxationError {
    #[error("relaxation order {order} is below the minimum order {min}")]
    OrderTooSmall { order: u32, min: u32 },
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MeasureId {
    Cell(usize),
    Terminal,
}

/// Where a measure's moments live among the program variables.
#[derive(Clone, Debug)]
pub struct MeasureLayout {
    pub id: MeasureId,
    pub offset: usize,
    pub basis: Arc<MomentBasis>,
}

#[derive(Clone, Debug)]
pub enum BlockKind {
    Moment { measure: usize, template: Arc<MatrixTemplate> },
    Localizing { measure: usize, guard: Polynomial, template: Arc<MatrixTemplate> },
    Mass,
}

#[derive(Clone, Debug)]
pub struct LmiRelaxation {
    pub order: u32,
    pub program: ConicProgram,
    /// Test monomial of each equality row.
    pub row_monomial: Vec<Monomial>,
    pub var_layout: Vec<MeasureLayout>,
    /// Origin of each program block, aligned with `program.blocks`.
    pub blocks: Vec<BlockKind>,
    /// The problem in the coordinates used for assembly.
    pub assembled: PwaOcp,
    pub scaling: Scaling,
}

impl LmiRelaxation {
    pub fn var_index(&self, measure: usize, position: usize) -> usize {
        self.var_layout[measure].offset + position
    }

    /// Moment vector of measure `measure` from a solution.
    pub fn moments(&self, measure: usize, y: &[f64]) -> Vec<f64> {
        let l = &self.var_layout[measure];
        y[l.offset..l.offset + l.basis.len()].to_vec()
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationOptions {
    /// Map state and input boxes onto `[-1, 1]` before assembly.
    pub scaling: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions { scaling: true, tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct ValueFunctionApprox {
    /// `v_d` in original coordinates.
    pub v: Polynomial,
    /// `v_d` in assembly coordinates.
    pub v_scaled: Polynomial,
    pub order: u32,
    pub lower_bound: f64,
    pub solver_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    /// Largest coefficient of the Putinar identity residual per cell,
    /// original coordinates.
    pub cell_residuals: Vec<f64>,
    /// Largest coefficient among the identity's terms per cell.
    pub cell_scales: Vec<f64>,
    /// Same residuals measured in assembly coordinates.
    pub cell_residuals_scaled: Vec<f64>,
    pub terminal_residual: f64,
    pub terminal_scale: f64,
    /// Sampled minimum of `grad v . f_i + L_i` per cell.
    pub hjb_min_per_cell: Vec<f64>,
    pub hjb_min: f64,
    pub worst_point: Vec<f64>,
    /// `L_T - v_d` at the terminal point, when the target is a point.
    pub terminal_gap: Option<f64>,
    /// Smallest eigenvalue over all Gram blocks.
    pub gram_min_eigenvalue: f64,
    pub identity_ok: bool,
    pub hjb_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderTimings {
    pub assemble_s: f64,
    pub solve_s: f64,
    pub certify_s: f64,
}

#[derive(Clone, Debug)]
pub struct OrderSolution {
    pub order: u32,
    pub value: ValueFunctionApprox,
    pub certificate: CertificateReport,
    pub solution: ConicSolution,
    pub relaxation: LmiRelaxation,
    pub timings: OrderTimings,
}

impl OrderSolution {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    pub fn lower_bound(&self) -> f64 {
        self.value.lower_bound
    }
}

/// Smallest `d` with `2d` covering every cost, guard and dynamics degree.
pub fn minimum_order(ocp: &PwaOcp) -> u32 {
    let mut deg = 1;
    for c in &ocp.cells {
        deg = deg.max(c.lagrangian.degree());
        for g in &c.guards {
            deg = deg.max(g.degree());
        }
    }
    deg = deg.max(ocp.terminal_cost.degree());
    for g in &ocp.terminal_guards {
        deg = deg.max(g.degree());
    }
    deg.div_ceil(2).max(1)
}

fn template_block(template: &MatrixTemplate, offset: usize) -> LmiBlock {
    let side = template.side;
    let mut per_var: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    for i in 0..side {
        for j in i..side {
            for &(pos, c) in template.entry(i, j) {
                per_var.entry(offset + pos).or_default().push((i, j, c));
            }
        }
    }
    let mut block = LmiBlock::new(nalgebra::DMatrix::zeros(side, side));
    block.coeffs = per_var.into_iter().collect();
    block
}

pub fn assemble(ocp: &PwaOcp, d: u32, opts: &RelaxationOptions) -> Result<LmiRelaxation, RelaxationError> {
    assemble_with_cache(ocp, d, opts, &TemplateCache::new())
}

pub fn assemble_with_cache(
    ocp: &PwaOcp,
    d: u32,
    opts: &RelaxationOptions,
    cache: &TemplateCache,
) -> Result<LmiRelaxation, RelaxationError> {
    let min = minimum_order(ocp);
    if d < min {
        return Err(RelaxationError::OrderTooSmall { order: d, min });
    }
    let scaling = if opts.scaling { Scaling::unit_box(ocp) } else { Scaling::identity(ocp.n, ocp.m) };
    let sc = scaling.apply(ocp);
    let (n, m) = (sc.n, sc.m);
    let nv = n + m;

    let mut layout = Vec::new();
    let mut offset = 0;
    let cell_basis = Arc::new(MomentBasis::new(nv, d));
    for i in 0..sc.cells.len() {
        layout.push(MeasureLayout { id: MeasureId::Cell(i), offset, basis: Arc::clone(&cell_basis) });
        offset += cell_basis.len();
    }
    let term_basis = Arc::new(MomentBasis::new(n, d));
    let terminal = layout.len();
    layout.push(MeasureLayout { id: MeasureId::Terminal, offset, basis: Arc::clone(&term_basis) });
    offset += term_basis.len();
    let mut program = ConicProgram::new(offset);

    let add_objective = |measure: usize, p: &Polynomial, program: &mut ConicProgram| -> Result<(), RelaxationError> {
        let l = &layout[measure];
        if p.degree() > 2 * d {
            return Err(MomentError::DegreeTooHigh { degree: p.degree(), order: d, max: 2 * d }.into());
        }
        for (mono, c) in p.terms() {
            program.objective[l.offset + l.basis.position(mono).expect("degree checked")] += c;
        }
        Ok(())
    };
    for (i, c) in sc.cells.iter().enumerate() {
        add_objective(i, &c.lagrangian, &mut program)?;
    }
    add_objective(terminal, &sc.terminal_cost, &mut program)?;

    let rows = monomials_up_to(n, 2 * d);
    let rhs = analytic_moments(&sc.initial, Arc::clone(&term_basis))?;
    for (r, beta) in rows.iter().enumerate() {
        let test = Polynomial::from_terms(n, [(beta.clone(), 1.0)]);
        let mut coeffs = Vec::new();
        for (i, cell) in sc.cells.iter().enumerate() {
            let f = lie_map(cell, &test).expect("state-only test function");
            for (mono, c) in f.terms() {
                coeffs.push((layout[i].offset + cell_basis.position(mono).expect("deg F(v) <= deg v"), c));
            }
        }
        coeffs.push((layout[terminal].offset + r, 1.0));
        program.add_equality(&coeffs, rhs.values[r]);
    }

    let mut blocks = Vec::new();
    for i in 0..sc.cells.len() {
        let t = cache.moment(nv, d);
        program.add_block(template_block(&t, layout[i].offset));
        blocks.push(BlockKind::Moment { measure: i, template: t });
        for g in sc.cell_support_guards(i) {
            let t = cache.localizing(&g, nv, d)?;
            program.add_block(template_block(&t, layout[i].offset));
            blocks.push(BlockKind::Localizing { measure: i, guard: g, template: t });
        }
    }
    let t = cache.moment(n, d);
    program.add_block(template_block(&t, layout[terminal].offset));
    blocks.push(BlockKind::Moment { measure: terminal, template: t });
    for g in sc.terminal_support_guards() {
        let t = cache.localizing(&g, n, d)?;
        program.add_block(template_block(&t, layout[terminal].offset));
        blocks.push(BlockKind::Localizing { measure: terminal, guard: g, template: t });
    }
    if let Some(mb) = sc.mass_bound {
        let coeffs: Vec<(usize, f64)> = (0..sc.cells.len()).map(|i| (layout[i].offset, -1.0)).collect();
        program.add_scalar_inequality(mb, &coeffs);
        blocks.push(BlockKind::Mass);
    }

    for b in &blocks {
        if let BlockKind::Moment { measure, template } | BlockKind::Localizing { measure, template, .. } = b {
            assert!(template.positions_needed() <= layout[*measure].basis.len(), "template exceeds measure basis");
        }
    }
    debug_assert!(program.validate().is_ok());

    Ok(LmiRelaxation {
        order: d,
        program,
        row_monomial: rows,
        var_layout: layout,
        blocks,
        assembled: sc,
        scaling,
    })
}

/// Assembles, solves and certifies one order.
pub fn solve_order(ocp: &PwaOcp, d: u32, opts: &RelaxationOptions) -> Result<OrderSolution, RelaxationError> {
    solve_order_with_cache(ocp, d, opts, &TemplateCache::new())
}

fn solve_order_with_cache(
    ocp: &PwaOcp,
    d: u32,
    opts: &RelaxationOptions,
    cache: &TemplateCache,
) -> Result<OrderSolution, RelaxationError> {
    let t0 = Instant::now();
    let relax = assemble_with_cache(ocp, d, opts, cache)?;
    let t1 = Instant::now();
    let solution = sdp::solve(&relax.program, opts.tol, opts.max_iter)?;
    let t2 = Instant::now();
    let n = ocp.n;
    let v_scaled = Polynomial::from_terms(
        n,
        relax.row_monomial.iter().cloned().zip(solution.eq_multipliers.iter().copied()),
    );
    let v = v_scaled.substitute_affine(&relax.scaling.state_from_original()).expect("state map");
    let value = ValueFunctionApprox {
        v,
        v_scaled,
        order: d,
        lower_bound: solution.primal_objective,
        solver_gap: solution.gap,
    };
    let certificate = verify_certificate(ocp, &relax, &value, &solution);
    let t3 = Instant::now();
    Ok(OrderSolution {
        order: d,
        value,
        certificate,
        solution,
        relaxation: relax,
        timings: OrderTimings {
            assemble_s: (t1 - t0).as_secs_f64(),
            solve_s: (t2 - t1).as_secs_f64(),
            certify_s: (t3 - t2).as_secs_f64(),
        },
    })
}

fn gram_polynomial(template: &MatrixTemplate, z: &nalgebra::DMatrix<f64>) -> Polynomial {
    let b = &template.row_monomials;
    let nv = template.nvars;
    let mut terms = Vec::with_capacity(b.len() * b.len());
    for i in 0..b.len() {
        for j in 0..b.len() {
            terms.push((b[i].mul(&b[j]), z[(i, j)]));
        }
    }
    Polynomial::from_terms(nv, terms)
}

/// Checks the Putinar identities
///
/// ```text
/// L_i - F_i(v) + rho = s_0 + sum_k p_k s_k      (each cell)
/// L_T - v            = s_0 + sum_k p_k s_k      (terminal)
/// ```
///
/// with `s = b' Z b` rebuilt from the block duals (`rho` is the mass-bound
/// multiplier), and samples the HJB inequality on a grid.
pub fn verify_certificate(
    ocp: &PwaOcp,
    relax: &LmiRelaxation,
    value: &ValueFunctionApprox,
    solution: &ConicSolution,
) -> CertificateReport {
    let sc = &relax.assembled;
    let (n, m) = (sc.n, sc.m);
    let nv = n + m;
    let rho = relax
        .blocks
        .iter()
        .zip(&solution.block_duals)
        .find(|(b, _)| matches!(b, BlockKind::Mass))
        .map_or(0.0, |(_, z)| z[(0, 0)]);
    let mut sos: Vec<Polynomial> = relax
        .var_layout
        .iter()
        .map(|l| Polynomial::zero(l.basis.nvars()))
        .collect();
    let mut gram_min = f64::INFINITY;
    for (b, z) in relax.blocks.iter().zip(&solution.block_duals) {
        let (measure, guard, template) = match b {
            BlockKind::Moment { measure, template } => (*measure, None, template),
            BlockKind::Localizing { measure, guard, template } => (*measure, Some(guard), template),
            BlockKind::Mass => continue,
        };
        gram_min = gram_min.min(nalgebra::SymmetricEigen::new(z.clone()).eigenvalues.min());
        let s = gram_polynomial(template, z);
        let term = match guard {
            Some(g) => g.multiply(&s).unwrap(),
            None => s,
        };
        sos[measure] = sos[measure].add(&term).unwrap();
    }

    let joint_back = relax.scaling.joint_from_original();
    let state_back = relax.scaling.state_from_original();
    let mut cell_residuals = Vec::new();
    let mut cell_scales = Vec::new();
    let mut cell_residuals_scaled = Vec::new();
    for (i, cell) in sc.cells.iter().enumerate() {
        let lhs = cell
            .lagrangian
            .sub(&lie_map(cell, &value.v_scaled).unwrap())
            .unwrap()
            .add(&Polynomial::constant(nv, rho))
            .unwrap();
        let resid = lhs.sub(&sos[i]).unwrap();
        cell_residuals_scaled.push(resid.max_abs_coefficient());
        let resid_o = resid.substitute_affine(&joint_back).unwrap();
        let scale = lhs
            .substitute_affine(&joint_back)
            .unwrap()
            .max_abs_coefficient()
            .max(sos[i].substitute_affine(&joint_back).unwrap().max_abs_coefficient());
        cell_residuals.push(resid_o.max_abs_coefficient());
        cell_scales.push(scale);
    }
    let t = relax.var_layout.len() - 1;
    let lhs_t = sc.terminal_cost.sub(&value.v_scaled).unwrap();
    let resid_t = lhs_t.sub(&sos[t]).unwrap().substitute_affine(&state_back).unwrap();
    let terminal_scale = lhs_t
        .substitute_affine(&state_back)
        .unwrap()
        .max_abs_coefficient()
        .max(sos[t].substitute_affine(&state_back).unwrap().max_abs_coefficient());

    let (hjb_min_per_cell, worst_point) = sample_hjb(ocp, &value.v, 201);
    let hjb_min = hjb_min_per_cell.iter().copied().fold(f64::INFINITY, f64::min);
    let terminal_gap = ocp
        .terminal_point()
        .map(|xt| ocp.terminal_cost.eval_at(&xt) - value.v.eval_at(&xt));

    let identity_ok = cell_residuals
        .iter()
        .zip(&cell_scales)
        .all(|(r, s)| *r <= 1e-6 * (1.0 + s))
        && resid_t.max_abs_coefficient() <= 1e-6 * (1.0 + terminal_scale);
    CertificateReport {
        cell_residuals,
        cell_scales,
        cell_residuals_scaled,
        terminal_residual: resid_t.max_abs_coefficient(),
        terminal_scale,
        hjb_ok: hjb_min >= -1e-4,
        hjb_min_per_cell,
        hjb_min,
        worst_point,
        terminal_gap,
        gram_min_eigenvalue: gram_min,
        identity_ok,
    }
}

/// Minimum of `grad v . f_i + L_i` over a tensor grid of the state and
/// input boxes, restricted to the points each cell contains. `per_dim`
/// points are used per coordinate when `n + m <= 2`; larger problems use
/// fewer per coordinate to keep the grid near `per_dim^2` points.
pub fn sample_hjb(ocp: &PwaOcp, v: &Polynomial, per_dim: usize) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (ocp.n, ocp.m);
    let dims = n + m;
    let k = if dims <= 2 {
        per_dim
    } else {
        ((per_dim as f64).powf(2.0 / dims as f64).floor() as usize).max(3)
    };
    let grad = v.gradient(n);
    let boxes: Vec<_> = ocp.state_box.iter().chain(&ocp.input_box).copied().collect();
    let total = k.pow(dims as u32);
    let mut mins = vec![f64::INFINITY; ocp.cells.len()];
    let mut worst = vec![0.0; dims];
    let mut overall = f64::INFINITY;
    let mut z = vec![0.0; dims];
    for idx in 0..total {
        let mut r = idx;
        for (c, iv) in boxes.iter().enumerate() {
            let j = r % k;
            r /= k;
            z[c] = iv.lo + (iv.hi - iv.lo) * j as f64 / (k - 1) as f64;
        }
        let (x, u) = z.split_at(n);
        let gx: Vec<f64> = grad.iter().map(|g| g.eval_at(x)).collect();
        for (i, cell) in ocp.cells.iter().enumerate() {
            if cell.guards.iter().any(|g| g.eval_at(&z) < -TOL_GUARD) {
                continue;
            }
            let f = cell.vector_field(x, u);
            let h = gx.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + cell.lagrangian.eval_at(&z);
            if h < mins[i] {
                mins[i] = h;
            }
            if h < overall {
                overall = h;
                worst = z.clone();
            }
        }
    }
    (mins, worst)
}

#[derive(Clone, Debug)]
pub struct HierarchyReport {
    pub min_order: u32,
    pub orders: Vec<OrderSolution>,
    /// Bounds nondecreasing in `d` up to `10 * tol`.
    pub monotone: bool,
}

impl HierarchyReport {
    pub fn order(&self, d: u32) -> Option<&OrderSolution> {
        self.orders.iter().find(|o| o.order == d)
    }
}

/// Solves orders `minimum_order..=d_max`, optionally in parallel. Failed
/// solves are recorded with their status; later orders still run.
pub fn hierarchy(ocp: &PwaOcp, d_max: u32, opts: &RelaxationOptions, parallel: bool) -> Result<HierarchyReport, RelaxationError> {
    let min = minimum_order(ocp);
    if d_max < min {
        return Err(RelaxationError::OrderTooSmall { order: d_max, min });
    }
    let cache = TemplateCache::new();
    let orders: Vec<u32> = (min..=d_max).collect();
    let results: Vec<Result<OrderSolution, RelaxationError>> = if parallel {
        // largest orders first so the slowest solves start early
        let mut r: Vec<_> = orders
            .par_iter()
            .rev()
            .map(|&d| solve_order_with_cache(ocp, d, opts, &cache))
            .collect();
        r.reverse();
        r
    } else {
        orders.iter().map(|&d| solve_order_with_cache(ocp, d, opts, &cache)).collect()
    };
    let orders = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let monotone = orders
        .windows(2)
        .all(|w| w[1].lower_bound() >= w[0].lower_bound() - 10.0 * opts.tol);
    Ok(HierarchyReport { min_order: min, orders, monotone })
}

/// Standalone value-function file: coefficients in ascending graded-lex
/// monomial order, over the state variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueFunctionFile {
    pub variables: Vec<String>,
    pub order: u32,
    pub lower_bound: f64,
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub text: String,
}

impl ValueFunctionFile {
    pub fn new(value: &ValueFunctionApprox, names: &[String]) -> Self {
        let (exponents, coefficients) = value.v.terms().map(|(m, c)| (m.exponents().to_vec(), c)).unzip();
        ValueFunctionFile {
            variables: names.to_vec(),
            order: value.order,
            lower_bound: value.lower_bound,
            exponents,
            coefficients,
            text: value.v.render(names),
        }
    }

    pub fn polynomial(&self) -> Result<Polynomial, PolyError> {
        let n = self.variables.len();
        if self.exponents.len() != self.coefficients.len() {
            return Err(PolyError::LengthMismatch { expected: self.exponents.len(), got: self.coefficients.len() });
        }
        for e in &self.exponents {
            if e.len() != n {
                return Err(PolyError::LengthMismatch { expected: n, got: e.len() });
            }
        }
        if let Some(k) = self.coefficients.iter().position(|c| !c.is_finite()) {
            return Err(PolyError::NonFinite(k));
        }
        Ok(Polynomial::from_terms(
            n,
            self.exponents.iter().map(|e| Monomial::new(e.clone())).zip(self.coefficients.iter().copied()),
        ))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureMoments {
    pub measure: MeasureId,
    pub moments: Vec<f64>,
}

/// Per-order entry of the solve report.
#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub d: u32,
    pub status: SolveStatus,
    pub lower_bound: f64,
    pub dual_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mass_multiplier: f64,
    pub value_function: ValueFunctionFile,
    /// `v_d` in the unit-box coordinates the program was assembled in.
    pub value_function_scaled: ValueFunctionFile,
    pub certificate: CertificateReport,
    pub moments: Vec<MeasureMoments>,
    pub timings: OrderTimings,
}

impl OrderSolution {
    pub fn mass_multiplier(&self) -> f64 {
        self.relaxation
            .blocks
            .iter()
            .zip(&self.solution.block_duals)
            .find(|(b, _)| matches!(b, BlockKind::Mass))
            .map_or(0.0, |(_, z)| z[(0, 0)])
    }

    pub fn report(&self, ocp: &PwaOcp) -> OrderReport {
        let names = ocp.state_names();
        let scaled = ValueFunctionApprox { v: self.value.v_scaled.clone(), ..self.value.clone() };
        OrderReport {
            d: self.order,
            status: self.solution.status,
            lower_bound: self.value.lower_bound,
            dual_bound: self.solution.dual_objective,
            gap: self.solution.gap,
            iterations: self.solution.iterations,
            primal_infeasibility: self.solution.primal_infeasibility,
            dual_infeasibility: self.solution.dual_infeasibility,
            mass_multiplier: self.mass_multiplier(),
            value_function: ValueFunctionFile::new(&self.value, &names),
            value_function_scaled: ValueFunctionFile::new(&scaled, &names),
            certificate: self.certificate.clone(),
            moments: self
                .relaxation
                .var_layout
                .iter()
                .enumerate()
                .map(|(k, l)| MeasureMoments { measure: l.id, moments: self.relaxation.moments(k, &self.solution.y) })
                .collect(),
            timings: self.timings.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::state_input_names;
    use crate::problem::builtin_example;

    #[test]
    fn minimum_orders() {
        let mut ocp = builtin_example();
        assert_eq!(minimum_order(&ocp), 1);
        ocp.cells[0].lagrangian = Polynomial::parse("x1^4 + u1^2", &state_input_names(1, 1)).unwrap();
        assert_eq!(minimum_order(&ocp), 2);
        for c in &mut ocp.cells {
            c.lagrangian = Polynomial::parse("x1 + 3", &state_input_names(1, 1)).unwrap();
        }
        assert_eq!(minimum_order(&ocp), 1);
    }

    #[test]
    fn row_counts_and_mass_row() {
        let ocp = builtin_example();
        let r = assemble(&ocp, 1, &RelaxationOptions::default()).unwrap();
        assert_eq!(r.var_layout.len(), 3);
        assert_eq!(r.program.num_equalities(), 3);
        // beta = 0 row touches only the terminal mass
        let t = r.var_layout[2].offset;
        let row0: Vec<(usize, f64)> = (0..r.program.nvar)
            .filter(|&k| r.program.eq_matrix[(0, k)] != 0.0)
            .map(|k| (k, r.program.eq_matrix[(0, k)]))
            .collect();
        assert_eq!(row0, vec![(t, 1.0)]);
        assert_eq!(r.program.eq_rhs[0], 1.0);
        let r6 = assemble(&ocp, 6, &RelaxationOptions::default()).unwrap();
        assert_eq!(r6.program.num_equalities(), 13);
        assert!(matches!(
            assemble(&ocp, 0, &RelaxationOptions::default()),
            Err(RelaxationError::OrderTooSmall { .. })
        ));
    }

    #[test]
    fn block_structure() {
        let ocp = builtin_example();
        let r = assemble(&ocp, 2, &RelaxationOptions::default()).unwrap();
        // per cell: moment + 1 user guard + 2 state + 2 input; terminal:
        // moment + 2 terminal + 2 state; plus the mass row
        assert_eq!(r.blocks.len(), 2 * 6 + 5 + 1);
        assert!(matches!(r.blocks.last(), Some(BlockKind::Mass)));
    }

    #[test]
    fn zero_candidate_samples_lagrangian() {
        let ocp = builtin_example();
        let (mins, worst) = sample_hjb(&ocp, &Polynomial::zero(1), 41);
        assert!(mins.iter().all(|&v| v >= 0.0));
        // L vanishes at (1, 0), which is on the grid
        assert!(mins.iter().any(|&v| v.abs() < 1e-12));
        assert!((worst[0] - 1.0).abs() < 1e-12 && worst[1].abs() < 1e-12);
    }
}
