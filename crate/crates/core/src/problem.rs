//! Problem data: cells with affine dynamics, costs, guards, boxes and the
//! initial measure, plus the JSON problem-file format.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{state_input_names, AffineMap, PolyError, Polynomial};

/// Absolute tolerance for guard membership tests.
pub const TOL_GUARD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown field at line {line}, column {column}: {message}")]
    UnknownField { line: usize, column: usize, message: String },
    #[error("{field}: dimension mismatch: {message}")]
    Dimension { field: String, message: String },
    #[error("{field}: interval must be finite and nonempty")]
    UnboundedBox { field: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{field}: {source}")]
    Polynomial { field: String, source: PolyError },
    #[error("point {0:?} lies outside the state box")]
    OutsideStateBox(Vec<f64>),
    #[error("no cell contains the point {0:?}")]
    NoCell(Vec<f64>),
    #[error("test function depends on input variables")]
    InputVariables,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialMeasure {
    Dirac(Vec<f64>),
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialMeasure {
    pub fn dim(&self) -> usize {
        match self {
            InitialMeasure::Dirac(p) => p.len(),
            InitialMeasure::UniformBox { lo, .. } => lo.len(),
        }
    }
}

/// One region of the partition. Indices are zero-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub a_mat: DMatrix<f64>,
    pub a_vec: DVector<f64>,
    pub b_mat: DMatrix<f64>,
    /// Running cost in `(x, u)`.
    pub lagrangian: Polynomial,
    /// User guards `p(x, u) >= 0`; the box guards are not stored here.
    pub guards: Vec<Polynomial>,
}

impl Cell {
    pub fn n(&self) -> usize {
        self.a_vec.len()
    }

    pub fn m(&self) -> usize {
        self.b_mat.ncols()
    }

    pub fn vector_field(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.a_vec[i];
                for j in 0..n {
                    s += self.a_mat[(i, j)] * x[j];
                }
                for k in 0..self.m() {
                    s += self.b_mat[(i, k)] * u[k];
                }
                s
            })
            .collect()
    }

    /// Components of `A x + a + B u` as polynomials in `(x, u)`.
    pub fn dynamics(&self) -> Vec<Polynomial> {
        let (n, m) = (self.n(), self.m());
        let nv = n + m;
        (0..n)
            .map(|i| {
                let mut terms = vec![(crate::polynomial::Monomial::one(nv), self.a_vec[i])];
                for j in 0..n {
                    terms.push((crate::polynomial::Monomial::var(nv, j), self.a_mat[(i, j)]));
                }
                for k in 0..m {
                    terms.push((crate::polynomial::Monomial::var(nv, n + k), self.b_mat[(i, k)]));
                }
                Polynomial::from_terms(nv, terms)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaOcp {
    pub n: usize,
    pub m: usize,
    pub cells: Vec<Cell>,
    /// Terminal cost in `x`.
    pub terminal_cost: Polynomial,
    /// Terminal-set guards in `x`.
    pub terminal_guards: Vec<Polynomial>,
    pub initial: InitialMeasure,
    pub state_box: Vec<Interval>,
    pub input_box: Vec<Interval>,
    pub mass_bound: Option<f64>,
}

/// Degree-one guards `v - lo >= 0` and `hi - v >= 0` for each interval,
/// placed on variables `offset..offset + boxes.len()` of `nvars`.
pub fn box_guards(nvars: usize, offset: usize, boxes: &[Interval]) -> Vec<Polynomial> {
    let mut out = Vec::with_capacity(2 * boxes.len());
    for (k, iv) in boxes.iter().enumerate() {
        let v = Polynomial::var(nvars, offset + k);
        out.push(v.add(&Polynomial::constant(nvars, -iv.lo)).unwrap());
        out.push(Polynomial::constant(nvars, iv.hi).sub(&v).unwrap());
    }
    out
}

impl PwaOcp {
    pub fn var_names(&self) -> Vec<String> {
        state_input_names(self.n, self.m)
    }

    pub fn state_names(&self) -> Vec<String> {
        state_input_names(self.n, 0)
    }

    /// Support guards of cell `i`: user guards, then state-box guards, then
    /// input-box guards, all in `(x, u)`.
    pub fn cell_support_guards(&self, i: usize) -> Vec<Polynomial> {
        let nv = self.n + self.m;
        let mut out = self.cells[i].guards.clone();
        out.extend(box_guards(nv, 0, &self.state_box));
        out.extend(box_guards(nv, self.n, &self.input_box));
        out
    }

    /// Terminal guards followed by state-box guards, in `x`.
    pub fn terminal_support_guards(&self) -> Vec<Polynomial> {
        let mut out = self.terminal_guards.clone();
        out.extend(box_guards(self.n, 0, &self.state_box));
        out
    }

    pub fn initial_point(&self) -> Option<&[f64]> {
        match &self.initial {
            InitialMeasure::Dirac(p) => Some(p),
            InitialMeasure::UniformBox { .. } => None,
        }
    }

    pub fn in_state_box(&self, x: &[f64], tol: f64) -> bool {
        self.state_box.iter().zip(x).all(|(iv, &v)| iv.contains(v, tol))
    }

    /// The single point cut out by the linear terminal guards, when they
    /// pin one down (for instance `x - 1 >= 0` together with `1 - x >= 0`).
    pub fn terminal_point(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let linear: Vec<&Polynomial> = self.terminal_guards.iter().filter(|g| g.degree() <= 1).collect();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for (k, g) in linear.iter().enumerate() {
            let (a, b) = linear_parts(g, n);
            for h in &linear[k + 1..] {
                let (a2, b2) = linear_parts(h, n);
                let opposite = a.iter().zip(&a2).all(|(p, q)| (p + q).abs() <= 1e-12 * (1.0 + p.abs()))
                    && (b + b2).abs() <= 1e-12 * (1.0 + b.abs());
                if opposite && a.iter().any(|v| *v != 0.0) {
                    rows.push((a.clone(), -b));
                }
            }
        }
        if rows.len() < n {
            return None;
        }
        let mat = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
        let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let svd = mat.clone().svd(true, true);
        if svd.rank(1e-10) < n {
            return None;
        }
        let x = svd.solve(&rhs, 1e-12).ok()?;
        if (&mat * &x - &rhs).amax() > 1e-9 {
            return None;
        }
        Some(x.iter().copied().collect())
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(invalid("n", "state dimension must be positive"));
        }
        if self.cells.is_empty() {
            return Err(invalid("cells", "at least one cell is required"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            let f = |name: &str| format!("cells[{i}].{name}");
            if c.a_mat.shape() != (n, n) {
                return Err(dim(f("A"), format!("expected {n}x{n}, got {}x{}", c.a_mat.nrows(), c.a_mat.ncols())));
            }
            if c.a_vec.len() != n {
                return Err(dim(f("a"), format!("expected length {n}, got {}", c.a_vec.len())));
            }
            if c.b_mat.shape() != (n, m) {
                return Err(dim(f("B"), format!("expected {n}x{m}, got {}x{}", c.b_mat.nrows(), c.b_mat.ncols())));
            }
            if c.lagrangian.nvars() != n + m {
                return Err(dim(f("lagrangian"), format!("expected {} variables", n + m)));
            }
            if c.guards.iter().any(|g| g.nvars() != n + m) {
                return Err(dim(f("guards"), format!("expected {} variables", n + m)));
            }
            let finite = c.a_mat.iter().chain(c.a_vec.iter()).chain(c.b_mat.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(invalid(format!("cells[{i}]"), "non-finite dynamics entry"));
            }
        }
        if self.terminal_cost.nvars() != n {
            return Err(dim("terminal_cost", format!("expected {n} variables")));
        }
        if self.terminal_guards.iter().any(|g| g.nvars() != n) {
            return Err(dim("terminal_guards", format!("expected {n} variables")));
        }
        check_box("state_box", &self.state_box, n)?;
        check_box("input_box", &self.input_box, m)?;
        match &self.initial {
            InitialMeasure::Dirac(p) => {
                if p.len() != n {
                    return Err(dim("initial.dirac", format!("expected length {n}, got {}", p.len())));
                }
                if !self.in_state_box(p, 0.0) {
                    return Err(invalid("initial.dirac", "point lies outside the state box"));
                }
            }
            InitialMeasure::UniformBox { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(dim("initial.uniform", format!("expected length {n}")));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                    return Err(invalid("initial.uniform", "requires lo < hi componentwise"));
                }
            }
        }
        if let Some(mb) = self.mass_bound {
            if !(mb > 0.0) || !mb.is_finite() {
                return Err(invalid("mass_bound", "must be strictly positive and finite"));
            }
        }
        Ok(())
    }
}

fn dim(field: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Dimension { field: field.into(), message: message.into() }
}

fn check_box(name: &str, b: &[Interval], len: usize) -> Result<(), ProblemError> {
    if b.len() != len {
        return Err(dim(name, format!("expected {len} intervals, got {}", b.len())));
    }
    for (k, iv) in b.iter().enumerate() {
        if !iv.lo.is_finite() || !iv.hi.is_finite() || !(iv.lo < iv.hi) {
            return Err(ProblemError::UnboundedBox { field: format!("{name}[{k}]") });
        }
    }
    Ok(())
}

fn linear_parts(g: &Polynomial, n: usize) -> (Vec<f64>, f64) {
    let a = (0..n)
        .map(|i| g.coefficient(&crate::polynomial::Monomial::var(n, i)))
        .collect();
    (a, g.constant_term())
}

/// `F(v) = -grad v . (A x + a + B u)`, a polynomial in `(x, u)`.
///
/// `v` may be given over the `n` state variables or over all `n + m`
/// variables, as long as it does not involve the inputs.
pub fn lie_map(cell: &Cell, v: &Polynomial) -> Result<Polynomial, ProblemError> {
    let (n, m) = (cell.n(), cell.m());
    let v = if v.nvars() == n {
        v.embed(n + m)
    } else if v.nvars() == n + m {
        if v.degree_in(n..n + m) > 0 {
            return Err(ProblemError::InputVariables);
        }
        v.clone()
    } else {
        return Err(dim("v", format!("expected {n} variables, got {}", v.nvars())));
    };
    let f = cell.dynamics();
    let mut out = Polynomial::zero(n + m);
    for (k, fk) in f.iter().enumerate() {
        let dv = v.partial_derivative(k).unwrap();
        out = out.sub(&dv.multiply(fk).unwrap()).unwrap();
    }
    Ok(out)
}

/// Index of the cell containing `x`. On shared boundaries the cell whose
/// active guards grow fastest along its own vector field at `(x, u_hint)`
/// wins; remaining ties go to the lowest index.
pub fn classify_cell(ocp: &PwaOcp, x: &[f64], u_hint: &[f64]) -> Result<usize, ProblemError> {
    if !ocp.in_state_box(x, TOL_GUARD) {
        return Err(ProblemError::OutsideStateBox(x.to_vec()));
    }
    let n = ocp.n;
    let point: Vec<f64> = x.iter().chain(u_hint).copied().collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in ocp.cells.iter().enumerate() {
        let values: Vec<f64> = cell.guards.iter().map(|g| g.eval_at(&point)).collect();
        if values.iter().any(|&v| v < -TOL_GUARD) {
            continue;
        }
        let field = cell.vector_field(x, u_hint);
        let mut inward = f64::INFINITY;
        for (g, &val) in cell.guards.iter().zip(&values) {
            if val.abs() > TOL_GUARD {
                continue;
            }
            let rate: f64 = (0..n)
                .map(|k| g.partial_derivative(k).unwrap().eval_at(&point) * field[k])
                .sum();
            inward = inward.min(rate);
        }
        match best {
            Some((_, b)) if !(inward > b + 1e-12) => {}
            _ => best = Some((i, inward)),
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| ProblemError::NoCell(x.to_vec()))
}

/// Outcome of the sampled boundary-consistency diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub checked_points: usize,
    pub max_mismatch: f64,
    pub worst_point: Option<Vec<f64>>,
    /// True when some mismatch exceeds `1e-6`.
    pub flagged: bool,
}

/// Samples points on the zero sets of the cell guards and compares the
/// vector fields of every pair of cells that both contain the point.
pub fn boundary_consistency(ocp: &PwaOcp, samples: usize, seed: u64) -> BoundaryReport {
    let n = ocp.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surfaces: Vec<(usize, usize)> = ocp
        .cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.guards.len()).map(move |k| (i, k)))
        .filter(|&(i, k)| ocp.cells[i].guards[k].degree_in(0..n) > 0)
        .collect();
    let mut report = BoundaryReport { checked_points: 0, max_mismatch: 0.0, worst_point: None, flagged: false };
    if surfaces.is_empty() {
        return report;
    }
    for s in 0..samples {
        let (ci, gk) = surfaces[s % surfaces.len()];
        let g = &ocp.cells[ci].guards[gk];
        let grad = g.gradient(n);
        let mut z: Vec<f64> = ocp
            .state_box
            .iter()
            .chain(&ocp.input_box)
            .map(|iv| rng.random_range(iv.lo..=iv.hi))
            .collect();
        let mut ok = false;
        for _ in 0..50 {
            let val = g.eval_at(&z);
            if val.abs() <= 1e-13 {
                ok = true;
                break;
            }
            let gr: Vec<f64> = grad.iter().map(|p| p.eval_at(&z)).collect();
            let norm2: f64 = gr.iter().map(|v| v * v).sum();
            if norm2 == 0.0 {
                break;
            }
            for k in 0..n {
                z[k] -= val * gr[k] / norm2;
            }
        }
        if !ok || !ocp.in_state_box(&z[..n], 0.0) {
            continue;
        }
        let (x, u) = z.split_at(n);
        let members: Vec<usize> = ocp
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.guards.iter().all(|g| g.eval_at(&z) >= -TOL_GUARD))
            .map(|(i, _)| i)
            .collect();
        report.checked_points += 1;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let fi = ocp.cells[i].vector_field(x, u);
                let fj = ocp.cells[j].vector_field(x, u);
                let diff = fi.iter().zip(&fj).fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
                if diff > report.max_mismatch {
                    report.max_mismatch = diff;
                    report.worst_point = Some(z.clone());
                }
            }
        }
    }
    report.flagged = report.max_mismatch > 1e-6;
    report
}

/// Per-coordinate affine map of the state and input boxes onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub state_center: Vec<f64>,
    pub state_half: Vec<f64>,
    pub input_center: Vec<f64>,
    pub input_half: Vec<f64>,
}

impl Scaling {
    pub fn unit_box(ocp: &PwaOcp) -> Self {
        Scaling {
            state_center: ocp.state_box.iter().map(Interval::center).collect(),
            state_half: ocp.state_box.iter().map(Interval::half_width).collect(),
            input_center: ocp.input_box.iter().map(Interval::center).collect(),
            input_half: ocp.input_box.iter().map(Interval::half_width).collect(),
        }
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Scaling {
            state_center: vec![0.0; n],
            state_half: vec![1.0; n],
            input_center: vec![0.0; m],
            input_half: vec![1.0; m],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.state_center.iter().chain(&self.input_center).all(|&c| c == 0.0)
            && self.state_half.iter().chain(&self.input_half).all(|&h| h == 1.0)
    }

    /// `x = c + h x'` as a map from scaled to original state coordinates.
    pub fn state_to_original(&self) -> AffineMap {
        AffineMap::diagonal(&self.state_half, &self.state_center)
    }

    /// `x' = (x - c) / h`, used to bring scaled polynomials back.
    pub fn state_from_original(&self) -> AffineMap {
        let scale: Vec<f64> = self.state_half.iter().map(|h| 1.0 / h).collect();
        let shift: Vec<f64> = self.state_center.iter().zip(&self.state_half).map(|(c, h)| -c / h).collect();
        AffineMap::diagonal(&scale, &shift)
    }

    fn joint_to_original(&self) -> AffineMap {
        let scale: Vec<f64> = self.state_half.iter().chain(&self.input_half).copied().collect();
        let shift: Vec<f64> = self.state_center.iter().chain(&self.input_center).copied().collect();
        AffineMap::diagonal(&scale, &shift)
    }

    /// Joint `(x', u') = ((x - c)/h, (u - cu)/hu)` map.
    pub fn joint_from_original(&self) -> AffineMap {
        let scale: Vec<f64> = self.state_half.iter().chain(&self.input_half).map(|h| 1.0 / h).collect();
        let shift: Vec<f64> = self
            .state_center
            .iter()
            .zip(&self.state_half)
            .chain(self.input_center.iter().zip(&self.input_half))
            .map(|(c, h)| -c / h)
            .collect();
        AffineMap::diagonal(&scale, &shift)
    }

    /// Rewrites the whole problem in scaled coordinates. Time is not scaled,
    /// so costs and the mass bound keep their meaning.
    pub fn apply(&self, ocp: &PwaOcp) -> PwaOcp {
        let (n, m) = (ocp.n, ocp.m);
        let joint = self.joint_to_original();
        let state = self.state_to_original();
        let hx = DMatrix::from_diagonal(&DVector::from_column_slice(&self.state_half));
        let hx_inv = DMatrix::from_diagonal(&DVector::from_iterator(n, self.state_half.iter().map(|h| 1.0 / h)));
        let hu = DMatrix::from_diagonal(&DVector::from_column_slice(&self.input_half));
        let cx = DVector::from_column_slice(&self.state_center);
        let cu = DVector::from_column_slice(&self.input_center);
        let cells = ocp
            .cells
            .iter()
            .map(|c| Cell {
                index: c.index,
                a_mat: &hx_inv * &c.a_mat * &hx,
                a_vec: &hx_inv * (&c.a_mat * &cx + &c.a_vec + &c.b_mat * &cu),
                b_mat: &hx_inv * &c.b_mat * &hu,
                lagrangian: c.lagrangian.substitute_affine(&joint).unwrap(),
                guards: c.guards.iter().map(|g| g.substitute_affine(&joint).unwrap()).collect(),
            })
            .collect();
        let to_scaled = |p: &[f64]| -> Vec<f64> {
            p.iter()
                .zip(&self.state_center)
                .zip(&self.state_half)
                .map(|((v, c), h)| (v - c) / h)
                .collect()
        };
        let initial = match &ocp.initial {
            InitialMeasure::Dirac(p) => InitialMeasure::Dirac(to_scaled(p)),
            InitialMeasure::UniformBox { lo, hi } => InitialMeasure::UniformBox { lo: to_scaled(lo), hi: to_scaled(hi) },
        };
        let map_box = |b: &[Interval], c: &[f64], h: &[f64]| -> Vec<Interval> {
            b.iter()
                .zip(c.iter().zip(h))
                .map(|(iv, (c, h))| Interval::new((iv.lo - c) / h, (iv.hi - c) / h))
                .collect()
        };
        PwaOcp {
            n,
            m,
            cells,
            terminal_cost: ocp.terminal_cost.substitute_affine(&state).unwrap(),
            terminal_guards: ocp.terminal_guards.iter().map(|g| g.substitute_affine(&state).unwrap()).collect(),
            initial,
            state_box: map_box(&ocp.state_box, &self.state_center, &self.state_half),
            input_box: map_box(&ocp.input_box, &self.input_center, &self.input_half),
            mass_bound: ocp.mass_bound,
        }
    }
}

/// The two-cell scalar example: `x' = -x + 1 + u` on `x >= 0`,
/// `x' = x + 1 + u` on `x <= 0`, cost `2(x - 1)^2 + u^2`, from `x(0) = -1`
/// to the target `x = 1`.
pub fn builtin_example() -> PwaOcp {
    let names = state_input_names(1, 1);
    let xn = state_input_names(1, 0);
    let poly = |s: &str| Polynomial::parse(s, &names).unwrap();
    let lagrangian = poly("2*(x1 - 1)^2 + u1^2");
    let cell = |index: usize, a: f64, guard: &str| Cell {
        index,
        a_mat: DMatrix::from_element(1, 1, a),
        a_vec: DVector::from_element(1, 1.0),
        b_mat: DMatrix::from_element(1, 1, 1.0),
        lagrangian: lagrangian.clone(),
        guards: vec![poly(guard)],
    };
    PwaOcp {
        n: 1,
        m: 1,
        cells: vec![cell(0, -1.0, "x1"), cell(1, 1.0, "-x1")],
        terminal_cost: Polynomial::zero(1),
        terminal_guards: vec![
            Polynomial::parse("x1 - 1", &xn).unwrap(),
            Polynomial::parse("1 - x1", &xn).unwrap(),
        ],
        initial: InitialMeasure::Dirac(vec![-1.0]),
        state_box: vec![Interval::new(-2.0, 2.0)],
        input_box: vec![Interval::new(-4.0, 4.0)],
        mass_bound: Some(20.0),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    m: usize,
    cells: Vec<CellFile>,
    #[serde(default)]
    terminal_cost: Option<String>,
    #[serde(default)]
    terminal_guards: Vec<String>,
    initial: InitialFile,
    state_box: Vec<[Option<f64>; 2]>,
    input_box: Vec<[Option<f64>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass_bound: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct CellFile {
    A: Vec<Vec<f64>>,
    a: Vec<f64>,
    B: Vec<Vec<f64>>,
    lagrangian: String,
    #[serde(default)]
    guards: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum InitialFile {
    Dirac(Vec<f64>),
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

fn matrix_from_rows(field: String, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, ProblemError> {
    // An n x 0 input matrix may be written as n empty rows or omitted rows.
    if ncols == 0 && rows.iter().all(|r| r.is_empty()) && (rows.is_empty() || rows.len() == nrows) {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    let got_cols = rows.first().map_or(0, Vec::len);
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(dim(field, format!("expected {nrows}x{ncols}, got {}x{got_cols}", rows.len())));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn parse_poly(field: String, text: &str, names: &[String]) -> Result<Polynomial, ProblemError> {
    Polynomial::parse(text, names).map_err(|source| ProblemError::Polynomial { field, source })
}

/// Parses and validates a problem file.
pub fn parse_problem(text: &str) -> Result<PwaOcp, ProblemError> {
    let raw: ProblemFile = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        if message.contains("unknown field") || message.contains("unknown variant") {
            ProblemError::UnknownField { line: e.line(), column: e.column(), message }
        } else {
            ProblemError::Syntax { line: e.line(), column: e.column(), message }
        }
    })?;
    let (n, m) = (raw.n, raw.m);
    let names = state_input_names(n, m);
    let xnames = state_input_names(n, 0);
    let mut cells = Vec::with_capacity(raw.cells.len());
    for (i, c) in raw.cells.iter().enumerate() {
        let f = |name: &str| format!("cells[{i}].{name}");
        if c.a.len() != n {
            return Err(dim(f("a"), format!("expected length {n}, got {}", c.a.len())));
        }
        cells.push(Cell {
            index: i,
            a_mat: matrix_from_rows(f("A"), &c.A, n, n)?,
            a_vec: DVector::from_column_slice(&c.a),
            b_mat: matrix_from_rows(f("B"), &c.B, n, m)?,
            lagrangian: parse_poly(f("lagrangian"), &c.lagrangian, &names)?,
            guards: c
                .guards
                .iter()
                .enumerate()
                .map(|(k, g)| parse_poly(format!("cells[{i}].guards[{k}]"), g, &names))
                .collect::<Result<_, _>>()?,
        });
    }
    let intervals = |name: &str, b: &[[Option<f64>; 2]]| -> Result<Vec<Interval>, ProblemError> {
        b.iter()
            .enumerate()
            .map(|(k, [lo, hi])| match (lo, hi) {
                (Some(lo), Some(hi)) => Ok(Interval::new(*lo, *hi)),
                _ => Err(ProblemError::UnboundedBox { field: format!("{name}[{k}]") }),
            })
            .collect()
    };
    let ocp = PwaOcp {
        n,
        m,
        cells,
        terminal_cost: match &raw.terminal_cost {
            Some(t) => parse_poly("terminal_cost".into(), t, &xnames)?,
            None => Polynomial::zero(n),
        },
        terminal_guards: raw
            .terminal_guards
            .iter()
            .enumerate()
            .map(|(k, g)| parse_poly(format!("terminal_guards[{k}]"), g, &xnames))
            .collect::<Result<_, _>>()?,
        initial: match raw.initial {
            InitialFile::Dirac(p) => InitialMeasure::Dirac(p),
            InitialFile::Uniform { lo, hi } => InitialMeasure::UniformBox { lo, hi },
        },
        state_box: intervals("state_box", &raw.state_box)?,
        input_box: intervals("input_box", &raw.input_box)?,
        mass_bound: raw.mass_bound,
    };
    ocp.validate()?;
    Ok(ocp)
}

/// Serializes a problem back to the problem-file format.
pub fn render(ocp: &PwaOcp) -> String {
    let names = ocp.var_names();
    let xnames = ocp.state_names();
    let rows = |mat: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..mat.nrows()).map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect()).collect()
    };
    let file = ProblemFile {
        n: ocp.n,
        m: ocp.m,
        cells: ocp
            .cells
            .iter()
            .map(|c| CellFile {
                A: rows(&c.a_mat),
                a: c.a_vec.iter().copied().collect(),
                B: rows(&c.b_mat),
                lagrangian: c.lagrangian.render(&names),
                guards: c.guards.iter().map(|g| g.render(&names)).collect(),
            })
            .collect(),
        terminal_cost: Some(ocp.terminal_cost.render(&xnames)),
        terminal_guards: ocp.terminal_guards.iter().map(|g| g.render(&xnames)).collect(),
        initial: match &ocp.initial {
            InitialMeasure::Dirac(p) => InitialFile::Dirac(p.clone()),
            InitialMeasure::UniformBox { lo, hi } => InitialFile::Uniform { lo: lo.clone(), hi: hi.clone() },
        },
        state_box: ocp.state_box.iter().map(|iv| [Some(iv.lo), Some(iv.hi)]).collect(),
        input_box: ocp.input_box.iter().map(|iv| [Some(iv.lo), Some(iv.hi)]).collect(),
        mass_bound: ocp.mass_bound,
    };
    serde_json::to_string_pretty(&file).expect("problem serializes")
}
