//! Truncated moment sequences, the Riesz functional, and the linear
//! templates behind moment and localizing matrices.
//!
//! Moment positions are ranks in the graded-lex monomial list. Because the
//! list for degree `k` is a prefix of the list for degree `k + 1`, a
//! monomial's position does not depend on the relaxation order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::polynomial::{monomials_up_to, Monomial, Polynomial};
use crate::problem::InitialMeasure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("polynomial of degree {degree} exceeds moment degree {max} of order {order}")]
    DegreeTooHigh { degree: u32, order: u32, max: u32 },
    #[error("template needs {needed} moments, basis has {available}")]
    BasisMismatch { needed: usize, available: usize },
    #[error("variable count mismatch: {expected} vs {got}")]
    VarCount { expected: usize, got: usize },
}

#[derive(Clone, Debug)]
pub struct MomentBasis {
    nvars: usize,
    order: u32,
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl MomentBasis {
    /// All monomials of degree at most `2 * order`.
    pub fn new(nvars: usize, order: u32) -> Self {
        let monomials = monomials_up_to(nvars, 2 * order);
        let index = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        MomentBasis { nvars, order, monomials, index }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }
}

#[derive(Clone, Debug)]
pub struct MomentVector {
    pub basis: Arc<MomentBasis>,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: Arc<MomentBasis>, values: Vec<f64>) -> Self {
        assert_eq!(basis.len(), values.len(), "moment vector length");
        MomentVector { basis, values }
    }

    pub fn zeros(basis: Arc<MomentBasis>) -> Self {
        let n = basis.len();
        MomentVector { basis, values: vec![0.0; n] }
    }

    pub fn mass(&self) -> f64 {
        self.values[0]
    }
}

/// Symmetric matrix whose entries are linear forms in the moments.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTemplate {
    pub nvars: usize,
    pub side: usize,
    pub half_order: u32,
    /// Row-major `side * side` entry lists of `(moment position, coefficient)`.
    pub entries: Vec<Vec<(usize, f64)>>,
    /// Monomials indexing rows and columns.
    pub row_monomials: Vec<Monomial>,
}

impl MatrixTemplate {
    pub fn entry(&self, i: usize, j: usize) -> &[(usize, f64)] {
        &self.entries[i * self.side + j]
    }

    /// One past the largest referenced moment position.
    pub fn positions_needed(&self) -> usize {
        self.entries.iter().flatten().map(|&(p, _)| p + 1).max().unwrap_or(0)
    }
}

fn position_of(m: &Monomial, cache: &mut HashMap<Monomial, usize>, basis: &MomentBasis) -> usize {
    if let Some(&p) = cache.get(m) {
        return p;
    }
    let p = basis.position(m).expect("monomial within basis degree");
    cache.insert(m.clone(), p);
    p
}

pub fn build_moment_template(nvars: usize, d: u32) -> MatrixTemplate {
    build_localizing_template(&Polynomial::constant(nvars, 1.0), nvars, d).expect("constant guard")
}

/// Template of `M_{d'}(p y)` with `d' = d - ceil(deg p / 2)`.
pub fn build_localizing_template(p: &Polynomial, nvars: usize, d: u32) -> Result<MatrixTemplate, MomentError> {
    if p.nvars() != nvars {
        return Err(MomentError::VarCount { expected: nvars, got: p.nvars() });
    }
    let deg = p.degree();
    if deg > 2 * d {
        return Err(MomentError::DegreeTooHigh { degree: deg, order: d, max: 2 * d });
    }
    let half = d - deg.div_ceil(2);
    let rows = monomials_up_to(nvars, half);
    let side = rows.len();
    let basis = MomentBasis::new(nvars, d);
    let mut cache = HashMap::new();
    let mut entries = vec![Vec::new(); side * side];
    for i in 0..side {
        for j in i..side {
            let base = rows[i].mul(&rows[j]);
            let mut list: Vec<(usize, f64)> = p
                .terms()
                .map(|(g, c)| (position_of(&base.mul(g), &mut cache, &basis), c))
                .collect();
            list.sort_by_key(|e| e.0);
            entries[j * side + i] = list.clone();
            entries[i * side + j] = list;
        }
    }
    Ok(MatrixTemplate { nvars, side, half_order: half, entries, row_monomials: rows })
}

/// Numeric matrix `M(y)`; linear in `y`.
pub fn instantiate(t: &MatrixTemplate, y: &MomentVector) -> Result<DMatrix<f64>, MomentError> {
    if y.basis.nvars() != t.nvars {
        return Err(MomentError::VarCount { expected: t.nvars, got: y.basis.nvars() });
    }
    let needed = t.positions_needed();
    if needed > y.values.len() {
        return Err(MomentError::BasisMismatch { needed, available: y.values.len() });
    }
    Ok(DMatrix::from_fn(t.side, t.side, |i, j| {
        t.entry(i, j).iter().map(|&(p, c)| c * y.values[p]).sum()
    }))
}

/// `l_y(p) = sum_a p_a y_a`.
pub fn riesz(y: &MomentVector, p: &Polynomial) -> Result<f64, MomentError> {
    if p.nvars() != y.basis.nvars() {
        return Err(MomentError::VarCount { expected: y.basis.nvars(), got: p.nvars() });
    }
    let max = 2 * y.basis.order();
    if p.degree() > max {
        return Err(MomentError::DegreeTooHigh { degree: p.degree(), order: y.basis.order(), max });
    }
    Ok(p.terms()
        .map(|(m, c)| c * y.values[y.basis.position(m).expect("degree checked")])
        .sum())
}

/// Exact moments of a Dirac or normalized uniform box measure.
pub fn analytic_moments(meas: &InitialMeasure, basis: Arc<MomentBasis>) -> Result<MomentVector, MomentError> {
    if meas.dim() != basis.nvars() {
        return Err(MomentError::VarCount { expected: basis.nvars(), got: meas.dim() });
    }
    let values = basis
        .monomials()
        .iter()
        .map(|m| match meas {
            InitialMeasure::Dirac(p) => m.eval(p),
            InitialMeasure::UniformBox { lo, hi } => m
                .exponents()
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&k, (&a, &b))| interval_moment(a, b, k))
                .product(),
        })
        .collect();
    Ok(MomentVector::new(basis, values))
}

/// `(1 / (b - a)) * integral_a^b x^k dx`.
fn interval_moment(a: f64, b: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    // sum_{j=0}^{k} a^j b^(k-j) / (k+1) avoids cancellation in b^(k+1) - a^(k+1)
    let mut s = 0.0;
    for j in 0..=k {
        s += a.powi(j as i32) * b.powi((k - j) as i32);
    }
    s / (k + 1) as f64
}

/// Shares templates across relaxation orders and measures.
#[derive(Default)]
pub struct TemplateCache {
    map: Mutex<HashMap<(usize, u32, Vec<(Vec<u32>, u64)>), Arc<MatrixTemplate>>>,
}

impl TemplateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn localizing(&self, p: &Polynomial, nvars: usize, d: u32) -> Result<Arc<MatrixTemplate>, MomentError> {
        let key = (
            nvars,
            d,
            p.terms().map(|(m, c)| (m.exponents().to_vec(), c.to_bits())).collect::<Vec<_>>(),
        );
        if let Some(t) = self.map.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(build_localizing_template(p, nvars, d)?);
        self.map.lock().unwrap().insert(key, Arc::clone(&t));
        Ok(t)
    }

    pub fn moment(&self, nvars: usize, d: u32) -> Arc<MatrixTemplate> {
        self.localizing(&Polynomial::constant(nvars, 1.0), nvars, d).expect("constant guard")
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::state_input_names;

    fn basis(nvars: usize, d: u32) -> Arc<MomentBasis> {
        Arc::new(MomentBasis::new(nvars, d))
    }

    fn x(s: &str) -> Polynomial {
        Polynomial::parse(s, &state_input_names(1, 0)).unwrap()
    }

    #[test]
    fn moment_template_is_hankel() {
        let t = build_moment_template(1, 1);
        assert_eq!(t.side, 2);
        assert_eq!(t.entry(0, 0), &[(0, 1.0)]);
        assert_eq!(t.entry(0, 1), &[(1, 1.0)]);
        assert_eq!(t.entry(1, 0), &[(1, 1.0)]);
        assert_eq!(t.entry(1, 1), &[(2, 1.0)]);
        let t = build_moment_template(2, 1);
        assert_eq!(t.side, 3);
        assert_eq!(t.entry(1, 2), &[(4, 1.0)]); // x*u sits after 1, x, u, x^2
        let t = build_moment_template(1, 2);
        assert_eq!(t.side, 3);
        assert_eq!(t.entry(2, 2), &[(4, 1.0)]);
    }

    #[test]
    fn localizing_templates() {
        assert_eq!(build_localizing_template(&x("1"), 1, 2).unwrap(), build_moment_template(1, 2));
        let t = build_localizing_template(&x("x1"), 1, 1).unwrap();
        assert_eq!((t.side, t.entry(0, 0)), (1, &[(1, 1.0)][..]));
        let t = build_localizing_template(&x("4 - x1^2"), 1, 2).unwrap();
        assert_eq!(t.side, 2);
        assert_eq!(t.entry(0, 0), &[(0, 4.0), (2, -1.0)]);
        assert!(matches!(
            build_localizing_template(&x("x1^3"), 1, 1),
            Err(MomentError::DegreeTooHigh { .. })
        ));
    }

    #[test]
    fn instantiation_examples() {
        let b = basis(1, 2);
        let dirac = MomentVector::new(Arc::clone(&b), vec![1.0; 5]);
        let m = instantiate(&build_moment_template(1, 2), &dirac).unwrap();
        assert_eq!(m, DMatrix::from_element(3, 3, 1.0));
        let lebesgue = analytic_moments(&InitialMeasure::UniformBox { lo: vec![0.0], hi: vec![1.0] }, basis(1, 1)).unwrap();
        let m = instantiate(&build_moment_template(1, 1), &lebesgue).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0 / 3.0]));
        let z = instantiate(&build_moment_template(1, 2), &MomentVector::zeros(b)).unwrap();
        assert_eq!(z, DMatrix::zeros(3, 3));
        let small = MomentVector::zeros(basis(1, 1));
        assert!(matches!(
            instantiate(&build_moment_template(1, 2), &small),
            Err(MomentError::BasisMismatch { .. })
        ));
    }

    #[test]
    fn riesz_examples() {
        let dirac = analytic_moments(&InitialMeasure::Dirac(vec![-1.0]), basis(1, 2)).unwrap();
        assert_eq!(dirac.values, vec![1.0, -1.0, 1.0, -1.0, 1.0]);
        assert_eq!(riesz(&dirac, &x("x1^2")).unwrap(), 1.0);
        assert_eq!(riesz(&dirac, &x("1")).unwrap(), dirac.mass());
        let leb = analytic_moments(&InitialMeasure::UniformBox { lo: vec![0.0], hi: vec![1.0] }, basis(1, 1)).unwrap();
        assert!((riesz(&leb, &x("2*(x1 - 1)^2")).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(riesz(&leb, &x("x1^3")), Err(MomentError::DegreeTooHigh { .. })));
        let zero = analytic_moments(&InitialMeasure::Dirac(vec![0.0]), basis(1, 3)).unwrap();
        assert_eq!(zero.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cache_shares_templates() {
        let cache = TemplateCache::new();
        let a = cache.localizing(&x("x1"), 1, 3).unwrap();
        let b = cache.localizing(&x("x1"), 1, 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.moment(1, 3);
        assert_eq!(cache.len(), 2);
    }
}
