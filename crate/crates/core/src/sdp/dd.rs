//! Double-double scalars (about 106 bits of mantissa) and the few dense
//! kernels the interior-point iteration needs.
//!
//! Error-free transformations follow Dekker and Knuth; products use a fused
//! multiply-add when the target has one and Dekker splitting otherwise.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline(always)]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[cfg(target_feature = "fma")]
#[inline(always)]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[cfg(not(target_feature = "fma"))]
#[inline(always)]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    const SPLIT: f64 = 134217729.0; // 2^27 + 1
    let p = a * b;
    let t = SPLIT * a;
    let ah = t - (t - a);
    let al = a - ah;
    let t = SPLIT * b;
    let bh = t - (t - b);
    let bl = b - bh;
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline(always)]
    pub fn new(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    #[inline(always)]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline(always)]
    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let q = self.hi.sqrt();
        let (p, e) = two_prod(q, q);
        let r = (self - Dd { hi: p, lo: e }).hi;
        let (hi, lo) = quick_two_sum(q, r / (2.0 * q));
        Dd { hi, lo }
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Dd {
        Dd::new(v)
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline(always)]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline(always)]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline(always)]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline(always)]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

impl AddAssign for Dd {
    #[inline(always)]
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl SubAssign for Dd {
    #[inline(always)]
    fn sub_assign(&mut self, b: Dd) {
        *self = *self - b;
    }
}

/// Dense row-major matrix of double-doubles.
#[derive(Clone, Debug, PartialEq)]
pub struct DdMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Dd>,
}

impl DdMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DdMat { rows, cols, data: vec![Dd::ZERO; rows * cols] }
    }

    pub fn identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Dd::new(scale);
        }
        m
    }

    pub fn from_f64(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = Dd::new(f(i, j));
            }
        }
        m
    }

    #[inline(always)]
    pub fn at(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.cols + j]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Dd {
        &mut self.data[i * self.cols + j]
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.at(i, j).to_f64())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.hi.abs()))
    }

    pub fn matmul(&self, b: &DdMat) -> DdMat {
        assert_eq!(self.cols, b.rows);
        let mut out = DdMat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.hi == 0.0 {
                    continue;
                }
                let row = &b.data[k * b.cols..(k + 1) * b.cols];
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bv) in orow.iter_mut().zip(row) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DdMat {
        let mut out = DdMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.at(i, j);
            }
        }
        out
    }

    /// `(X + X^T) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in i + 1..n {
                let v = (self.at(i, j) + self.at(j, i)).mul_f64(0.5);
                *self.at_mut(i, j) = v;
                *self.at_mut(j, i) = v;
            }
        }
    }

    pub fn axpy(&mut self, alpha: Dd, x: &DdMat) {
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, b: &DdMat) -> Dd {
        self.data.iter().zip(&b.data).fold(Dd::ZERO, |acc, (&x, &y)| acc + x * y)
    }

    /// Lower Cholesky factor, or `None` if a pivot is not positive.
    pub fn cholesky(&self) -> Option<DdMat> {
        let n = self.rows;
        let mut l = DdMat::zeros(n, n);
        for j in 0..n {
            let mut d = self.at(j, j);
            for k in 0..j {
                let v = l.at(j, k);
                d -= v * v;
            }
            if !(d.hi > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            *l.at_mut(j, j) = djj;
            for i in j + 1..n {
                let mut s = self.at(i, j);
                for k in 0..j {
                    s -= l.at(i, k) * l.at(j, k);
                }
                *l.at_mut(i, j) = s / djj;
            }
        }
        Some(l)
    }

    /// Inverse of a lower-triangular matrix.
    pub fn lower_inverse(&self) -> DdMat {
        let n = self.rows;
        let mut inv = DdMat::zeros(n, n);
        for j in 0..n {
            *inv.at_mut(j, j) = Dd::ONE / self.at(j, j);
            for i in j + 1..n {
                let mut s = Dd::ZERO;
                for k in j..i {
                    s += self.at(i, k) * inv.at(k, j);
                }
                *inv.at_mut(i, j) = -(s / self.at(i, i));
            }
        }
        inv
    }
}

/// LU factorization with partial pivoting, used for the indefinite Newton
/// system.
pub struct DdLu {
    n: usize,
    lu: DdMat,
    perm: Vec<usize>,
}

impl DdLu {
    pub fn new(mut a: DdMat) -> Option<DdLu> {
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a.at(k, k).hi.abs();
            for i in k + 1..n {
                let v = a.at(i, k).hi.abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    a.data.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = a.at(k, k);
            let (top, rest) = a.data.split_at_mut((k + 1) * n);
            let prow = &top[k * n..(k + 1) * n];
            for i in 0..n - k - 1 {
                let row = &mut rest[i * n..(i + 1) * n];
                if row[k].hi == 0.0 {
                    continue;
                }
                let f = row[k] / pivot;
                row[k] = f;
                for j in k + 1..n {
                    row[j] -= f * prow[j];
                }
            }
        }
        Some(DdLu { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[Dd]) -> Vec<Dd> {
        let n = self.n;
        let mut x: Vec<Dd> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu.at(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu.at(i, j) * x[j];
            }
            x[i] = s / self.lu.at(i, i);
        }
        x
    }
}
