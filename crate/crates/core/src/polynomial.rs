//! Sparse multivariate polynomials over a fixed variable list.
//!
//! Terms are kept in a `BTreeMap` keyed by [`Monomial`], whose ordering is
//! graded lexicographic: total degree first, then the exponent of the first
//! variable descending, and so on. For two variables `(x, u)` and degree 1
//! this gives `[1, x, u]`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("point has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite evaluation input at coordinate {0}")]
    NonFinite(usize),
    #[error("affine map has {rows} rows, polynomial has {nvars} variables")]
    MapDimension { rows: usize, nvars: usize },
    #[error("cannot drop variable {index}: polynomial depends on it")]
    DependsOnDropped { index: usize },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// Exponent vector of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    pub fn one(nvars: usize) -> Self {
        Monomial { exps: vec![0; nvars] }
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[index] = 1;
        Monomial { exps }
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    /// Product of two monomials (exponents add).
    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(point)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `nvars` variables of total degree at most `degree`, in
/// graded-lex order. The list has `C(nvars + degree, nvars)` entries.
pub fn monomials_up_to(nvars: usize, degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for deg in 0..=degree {
        let mut current = vec![0u32; nvars];
        push_degree(nvars, 0, deg, &mut current, &mut out);
    }
    out
}

// Recursion puts larger exponents on earlier variables first, which is the
// within-degree order of `Monomial::cmp`.
fn push_degree(nvars: usize, pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if nvars == 0 {
        if remaining == 0 {
            out.push(Monomial::new(Vec::new()));
        }
        return;
    }
    if pos == nvars - 1 {
        current[pos] = remaining;
        out.push(Monomial::new(current.clone()));
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_degree(nvars, pos + 1, remaining - e, current, out);
    }
    current[pos] = 0;
}

/// Affine change of variables `x = S x' + c`. `S` has one row per old
/// variable and one column per new variable.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert_eq!(matrix.nrows(), offset.len(), "affine map offset length");
        AffineMap { matrix, offset }
    }

    pub fn identity(n: usize) -> Self {
        AffineMap::new(DMatrix::identity(n, n), DVector::zeros(n))
    }

    /// Diagonal map `x_i = scale_i x'_i + shift_i`.
    pub fn diagonal(scale: &[f64], shift: &[f64]) -> Self {
        AffineMap::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(scale)),
            DVector::from_column_slice(shift),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::from_terms(nvars, [(Monomial::one(nvars), c)])
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        Self::from_terms(nvars, [(Monomial::var(nvars, index), 1.0)])
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing
    /// repeated monomials and dropping exact zeros.
    ///
    /// # Panics
    /// If a monomial has the wrong number of variables.
    pub fn from_terms<I: IntoIterator<Item = (Monomial, f64)>>(nvars: usize, terms: I) -> Self {
        let mut map = BTreeMap::new();
        for (mono, c) in terms {
            assert_eq!(mono.nvars(), nvars, "monomial length");
            *map.entry(mono).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Polynomial { nvars, terms: map }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, mono: &Monomial) -> f64 {
        self.terms.get(mono).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one(self.nvars))
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Degree in the variables `vars` only.
    pub fn degree_in(&self, vars: std::ops::Range<usize>) -> u32 {
        self.terms
            .keys()
            .map(|m| m.exps[vars.clone()].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn check_same(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCountMismatch { left: self.nvars, right: other.nvars });
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { nvars: self.nvars, terms })
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn multiply(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                *terms.entry(m1.mul(m2)).or_insert(0.0) += c1 * c2;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { nvars: self.nvars, terms })
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut terms = self.terms.clone();
        for c in terms.values_mut() {
            *c *= s;
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial { nvars: self.nvars, terms }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.multiply(self).expect("same nvars");
        }
        out
    }

    pub fn partial_derivative(&self, var: usize) -> Result<Polynomial, PolyError> {
        if var >= self.nvars {
            return Err(PolyError::IndexOutOfRange { index: var, nvars: self.nvars });
        }
        let terms = self.terms.iter().filter(|(m, _)| m.exps[var] > 0).map(|(m, &c)| {
            let mut exps = m.exps.clone();
            let e = exps[var];
            exps[var] -= 1;
            (Monomial::new(exps), c * e as f64)
        });
        Ok(Polynomial::from_terms(self.nvars, terms))
    }

    /// Gradient with respect to the first `k` variables.
    pub fn gradient(&self, k: usize) -> Vec<Polynomial> {
        (0..k)
            .map(|i| self.partial_derivative(i).expect("index within nvars"))
            .collect()
    }

    /// Evaluates with Neumaier-compensated summation over the terms.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::LengthMismatch { expected: self.nvars, got: point.len() });
        }
        if let Some(i) = point.iter().position(|x| !x.is_finite()) {
            return Err(PolyError::NonFinite(i));
        }
        Ok(self.eval_at(point))
    }

    /// Unchecked evaluation for inner loops; the caller guarantees the
    /// point length.
    pub fn eval_at(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (m, &c) in &self.terms {
            let t = c * m.eval(point);
            let s = sum + t;
            if sum.abs() >= t.abs() {
                comp += (sum - s) + t;
            } else {
                comp += (t - s) + sum;
            }
            sum = s;
        }
        sum + comp
    }

    /// Composes with `x = S x' + c`; the result lives in `S.ncols()` variables.
    pub fn substitute_affine(&self, map: &AffineMap) -> Result<Polynomial, PolyError> {
        if map.matrix.nrows() != self.nvars {
            return Err(PolyError::MapDimension { rows: map.matrix.nrows(), nvars: self.nvars });
        }
        let new_n = map.matrix.ncols();
        let images: Vec<Polynomial> = (0..self.nvars)
            .map(|i| {
                let mut terms = vec![(Monomial::one(new_n), map.offset[i])];
                for j in 0..new_n {
                    terms.push((Monomial::var(new_n, j), map.matrix[(i, j)]));
                }
                Polynomial::from_terms(new_n, terms)
            })
            .collect();
        let mut powers: Vec<Vec<Polynomial>> =
            images.iter().map(|_| vec![Polynomial::constant(new_n, 1.0)]).collect();
        let mut out = Polynomial::zero(new_n);
        for (m, &c) in &self.terms {
            let mut term = Polynomial::constant(new_n, c);
            for (i, &e) in m.exps.iter().enumerate() {
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap().multiply(&images[i]).unwrap();
                    powers[i].push(next);
                }
                if e > 0 {
                    term = term.multiply(&powers[i][e as usize]).unwrap();
                }
            }
            out = out.add(&term).unwrap();
        }
        Ok(out)
    }

    /// Re-embeds into `nvars` variables, keeping the current ones first.
    pub fn embed(&self, nvars: usize) -> Polynomial {
        assert!(nvars >= self.nvars, "embed cannot shrink");
        let terms = self.terms.iter().map(|(m, &c)| {
            let mut exps = m.exps.clone();
            exps.resize(nvars, 0);
            (Monomial::new(exps), c)
        });
        Polynomial::from_terms(nvars, terms)
    }

    /// Drops the trailing variables beyond `nvars`; they must not appear.
    pub fn restrict(&self, nvars: usize) -> Result<Polynomial, PolyError> {
        assert!(nvars <= self.nvars, "restrict cannot grow");
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, &c) in &self.terms {
            if let Some(k) = m.exps[nvars..].iter().position(|&e| e > 0) {
                return Err(PolyError::DependsOnDropped { index: nvars + k });
            }
            terms.push((Monomial::new(m.exps[..nvars].to_vec()), c));
        }
        Ok(Polynomial::from_terms(nvars, terms))
    }

    /// Renders with the given variable names, terms in canonical order.
    pub fn render(&self, names: &[String]) -> String {
        assert_eq!(names.len(), self.nvars, "one name per variable");
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (k, (m, &c)) in self.terms.iter().enumerate() {
            let negative = c < 0.0;
            let mag = c.abs();
            if k == 0 {
                if negative {
                    out.push('-');
                }
            } else {
                out.push_str(if negative { " - " } else { " + " });
            }
            let factors: Vec<String> = m
                .exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| if e == 1 { names[i].clone() } else { format!("{}^{}", names[i], e) })
                .collect();
            if factors.is_empty() {
                out.push_str(&format_number(mag));
            } else {
                if mag != 1.0 {
                    out.push_str(&format_number(mag));
                    out.push('*');
                }
                out.push_str(&factors.join("*"));
            }
        }
        out
    }

    /// Parses an expression in the named variables using `+ - * ^` and
    /// parentheses. Exponents must be nonnegative integer literals.
    pub fn parse(text: &str, names: &[String]) -> Result<Polynomial, PolyError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0, names };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(out)
    }
}

/// Names `x1..xn, u1..um`, the variable convention of problem files.
pub fn state_input_names(n: usize, m: usize) -> Vec<String> {
    (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=m).map(|i| format!("u{i}")))
        .collect()
}

pub(crate) fn format_number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..=self.nvars).map(|i| format!("z{i}")).collect();
        f.write_str(&self.render(&names))
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn error(&self, message: &str) -> PolyError {
        PolyError::Parse { column: self.pos + 1, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn nvars(&self) -> usize {
        self.names.len()
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?)?;
                }
                b'-' => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = acc.multiply(&self.unary()?)?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.unary()?.scale(-1.0))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected a nonnegative integer exponent"));
            }
            let k: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.error("exponent too large"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match self.names.iter().position(|n| n == ident) {
                    Some(i) => Ok(Polynomial::var(self.nvars(), i)),
                    None => {
                        self.pos = start;
                        Err(self.error(&format!("unknown variable '{ident}'")))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Polynomial, PolyError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            digits(self);
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| {
            let mut e = self.error(&format!("bad number '{text}'"));
            if let PolyError::Parse { column, .. } = &mut e {
                *column = start + 1;
            }
            e
        })?;
        Ok(Polynomial::constant(self.nvars(), value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xu() -> Vec<String> {
        state_input_names(1, 1)
    }

    fn p(s: &str) -> Polynomial {
        Polynomial::parse(s, &xu()).unwrap()
    }

    #[test]
    fn additive_inverse_is_zero() {
        assert!(p("x1").add(&p("-x1")).unwrap().is_zero());
    }

    #[test]
    fn cancellation() {
        assert_eq!(p("x1^2 - 2*x1 + 1").add(&p("2*x1")).unwrap(), p("x1^2 + 1"));
    }

    #[test]
    fn lagrangian_expansion() {
        let l = p("2*(x1 - 1)^2 + u1^2");
        assert_eq!(l, p("2*x1^2 - 4*x1 + 2 + u1^2"));
        assert_eq!(l.render(&xu()), "2 - 4*x1 + 2*x1^2 + u1^2");
    }

    #[test]
    fn multiply_examples() {
        assert_eq!(p("x1 - 1").multiply(&p("x1 - 1")).unwrap(), p("x1^2 - 2*x1 + 1"));
        let q = p("3*x1*u1 - 2");
        assert_eq!(p("1").multiply(&q).unwrap(), q);
        let xu = p("x1").multiply(&p("u1")).unwrap();
        assert_eq!(xu.terms().next().unwrap().0.exponents(), &[1, 1]);
    }

    #[test]
    fn mismatch_errors() {
        let a = Polynomial::var(1, 0);
        let b = Polynomial::var(2, 0);
        assert!(matches!(a.add(&b), Err(PolyError::VarCountMismatch { .. })));
        assert!(matches!(a.multiply(&b), Err(PolyError::VarCountMismatch { .. })));
        assert!(matches!(a.partial_derivative(1), Err(PolyError::IndexOutOfRange { .. })));
        assert!(matches!(a.evaluate(&[1.0, 2.0]), Err(PolyError::LengthMismatch { .. })));
        assert!(matches!(a.evaluate(&[f64::NAN]), Err(PolyError::NonFinite(0))));
    }

    #[test]
    fn derivatives() {
        assert_eq!(p("x1^2").partial_derivative(0).unwrap(), p("2*x1"));
        assert!(p("7").partial_derivative(0).unwrap().is_zero());
        assert_eq!(p("2*x1^2 - 4*x1 + 2 + u1^2").partial_derivative(1).unwrap(), p("2*u1"));
    }

    #[test]
    fn evaluation() {
        let l = p("2*(x1 - 1)^2 + u1^2");
        assert_eq!(l.evaluate(&[-1.0, 0.0]).unwrap(), 8.0);
        let q = p("3*x1^2*u1 - 5 + u1");
        assert_eq!(q.evaluate(&[0.0, 0.0]).unwrap(), -5.0);
        let s3 = 3f64.sqrt();
        let k = Polynomial::parse(&format!("{}*(x1 - 1)", 1.0 - s3), &["x1".to_string()]).unwrap();
        assert!((k.evaluate(&[0.0]).unwrap() - (s3 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn monomial_lists() {
        let l = monomials_up_to(1, 2);
        assert_eq!(l, vec![Monomial::new(vec![0]), Monomial::new(vec![1]), Monomial::new(vec![2])]);
        let l = monomials_up_to(2, 1);
        assert_eq!(
            l,
            vec![Monomial::new(vec![0, 0]), Monomial::new(vec![1, 0]), Monomial::new(vec![0, 1])]
        );
        assert_eq!(monomials_up_to(2, 2).len(), 6);
        assert_eq!(monomials_up_to(0, 3).len(), 1);
    }

    #[test]
    fn affine_substitution() {
        let x = vec!["x1".to_string()];
        let sq = Polynomial::parse("x1^2", &x).unwrap();
        let scaled = sq.substitute_affine(&AffineMap::diagonal(&[2.0], &[0.0])).unwrap();
        assert_eq!(scaled, Polynomial::parse("4*x1^2", &x).unwrap());
        let q = p("3*x1*u1 - u1^3 + 2");
        assert_eq!(q.substitute_affine(&AffineMap::identity(2)).unwrap(), q);
        let shifted = Polynomial::parse("(x1 - 1)^2", &x).unwrap();
        let r = shifted.substitute_affine(&AffineMap::diagonal(&[1.0], &[1.0])).unwrap();
        assert_eq!(r, Polynomial::parse("x1^2", &x).unwrap());
        assert!(matches!(
            q.substitute_affine(&AffineMap::identity(3)),
            Err(PolyError::MapDimension { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_column() {
        let err = Polynomial::parse("x1 + y2", &xu()).unwrap_err();
        assert_eq!(err, PolyError::Parse { column: 6, message: "unknown variable 'y2'".into() });
        assert!(Polynomial::parse("(x1", &xu()).is_err());
        assert!(Polynomial::parse("x1^u1", &xu()).is_err());
        assert!(Polynomial::parse("", &xu()).is_err());
    }

    #[test]
    fn render_round_trip() {
        let q = p("-0.1*x1^3*u1 + 1e-20*u1 - 12345.5 + x1");
        let text = q.render(&xu());
        assert_eq!(Polynomial::parse(&text, &xu()).unwrap(), q);
        assert_eq!(Polynomial::zero(2).render(&xu()), "0");
    }

    #[test]
    fn embed_and_restrict() {
        let x = Polynomial::parse("x1^2 - 1", &["x1".to_string()]).unwrap();
        let e = x.embed(2);
        assert_eq!(e, p("x1^2 - 1"));
        assert_eq!(e.restrict(1).unwrap(), x);
        assert!(p("x1*u1").restrict(1).is_err());
    }
}
