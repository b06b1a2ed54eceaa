//! Global minimization of the Hamiltonian over the input box at a frozen
//! state.

use nalgebra::DMatrix;

use super::PolicyError;
use crate::polynomial::{AffineMap, Polynomial};
use crate::problem::{Cell, Interval};

/// The objective `q(u) = p . (A x + a + B u) + L(x, u)` for a fixed state
/// `x` and costate `p = grad v(x)`, as a polynomial in `u`.
pub fn hamiltonian_in_u(cell: &Cell, x: &[f64], p: &[f64]) -> Result<Polynomial, PolicyError> {
    let (n, m) = (cell.n(), cell.m());
    if x.iter().chain(p).any(|v| !v.is_finite()) {
        return Err(PolicyError::NonFinite { what: "state or value gradient", at: x.to_vec() });
    }
    let mut matrix = DMatrix::zeros(n + m, m);
    for k in 0..m {
        matrix[(n + k, k)] = 1.0;
    }
    let mut offset = nalgebra::DVector::zeros(n + m);
    for i in 0..n {
        offset[i] = x[i];
    }
    let mut q = cell.lagrangian.substitute_affine(&AffineMap::new(matrix, offset)).expect("joint variables");
    let f0 = cell.vector_field(x, &vec![0.0; m]);
    let mut terms = vec![(crate::polynomial::Monomial::one(m), p.iter().zip(&f0).map(|(a, b)| a * b).sum::<f64>())];
    for k in 0..m {
        let c: f64 = (0..n).map(|i| p[i] * cell.b_mat[(i, k)]).sum();
        terms.push((crate::polynomial::Monomial::var(m, k), c));
    }
    q = q.add(&Polynomial::from_terms(m, terms)).unwrap();
    Ok(q)
}

fn better(cand: (f64, &[f64]), best: (f64, &[f64])) -> bool {
    let scale = 1e-12 * (1.0 + best.0.abs());
    if cand.0 < best.0 - scale {
        return true;
    }
    if cand.0 > best.0 + scale {
        return false;
    }
    let na: f64 = cand.1.iter().map(|v| v * v).sum();
    let nb: f64 = best.1.iter().map(|v| v * v).sum();
    if na != nb {
        return na < nb;
    }
    cand.1.partial_cmp(best.1) == Some(std::cmp::Ordering::Less)
}

/// Real roots of `sum c_k t^k` via companion-matrix eigenvalues.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    match deg {
        0 => Vec::new(),
        1 => vec![-coeffs[0] / coeffs[1]],
        _ => {
            let lead = coeffs[deg];
            let mut c = DMatrix::zeros(deg, deg);
            for i in 1..deg {
                c[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                c[(i, deg - 1)] = -coeffs[i] / lead;
            }
            c.complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
                .map(|z| {
                    // one Newton polish on the real part
                    let mut t = z.re;
                    let (mut f, mut df) = (0.0, 0.0);
                    for &ck in coeffs[..=deg].iter().rev() {
                        df = df * t + f;
                        f = f * t + ck;
                    }
                    if df != 0.0 && (f / df).is_finite() {
                        t -= f / df;
                    }
                    t
                })
                .collect()
        }
    }
}

/// Global minimizer of `q` over the box.
///
/// One input: all real critical points inside the box plus both endpoints
/// are compared. Several inputs: projected Barzilai-Borwein descent from a
/// `3^m` grid of seeds plus the box corners. Equal values are broken by
/// smallest norm, then lexicographically.
pub fn minimize_over_box(q: &Polynomial, input_box: &[Interval]) -> Result<(Vec<f64>, f64), PolicyError> {
    let m = input_box.len();
    if m == 0 {
        let v = q.eval_at(&[]);
        return finite(Vec::new(), v);
    }
    if m == 1 {
        let iv = input_box[0];
        let deg = q.degree() as usize;
        let mut coeffs = vec![0.0; deg + 1];
        for (mono, c) in q.terms() {
            coeffs[mono.exponents()[0] as usize] += c;
        }
        let dcoeffs: Vec<f64> = (1..coeffs.len()).map(|k| k as f64 * coeffs[k]).collect();
        let mut cands = vec![iv.lo, iv.hi];
        if !dcoeffs.is_empty() {
            cands.extend(real_roots(&dcoeffs).into_iter().filter(|t| iv.contains(*t, 0.0)));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for t in cands {
            let v = q.eval_at(&[t]);
            if !v.is_finite() {
                return Err(PolicyError::NonFinite { what: "hamiltonian", at: vec![t] });
            }
            if best.as_ref().is_none_or(|(bv, bu)| better((v, &[t]), (*bv, bu))) {
                best = Some((v, vec![t]));
            }
        }
        let (v, u) = best.unwrap();
        return Ok((u, v));
    }
    let grad = q.gradient(m);
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for idx in 0..3usize.pow(m as u32) {
        let mut r = idx;
        seeds.push(
            input_box
                .iter()
                .map(|iv| {
                    let j = r % 3;
                    r /= 3;
                    iv.lo + (iv.hi - iv.lo) * (0.25 + 0.25 * j as f64)
                })
                .collect(),
        );
    }
    for idx in 0..(1usize << m) {
        seeds.push(input_box.iter().enumerate().map(|(k, iv)| if idx >> k & 1 == 1 { iv.hi } else { iv.lo }).collect());
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for seed in seeds {
        let u = projected_descent(q, &grad, input_box, seed);
        let v = q.eval_at(&u);
        if !v.is_finite() {
            return Err(PolicyError::NonFinite { what: "hamiltonian", at: u });
        }
        if best.as_ref().is_none_or(|(bv, bu)| better((v, &u), (*bv, bu))) {
            best = Some((v, u));
        }
    }
    let (v, u) = best.unwrap();
    Ok((u, v))
}

fn finite(u: Vec<f64>, v: f64) -> Result<(Vec<f64>, f64), PolicyError> {
    if v.is_finite() {
        Ok((u, v))
    } else {
        Err(PolicyError::NonFinite { what: "hamiltonian", at: u })
    }
}

fn project(u: &mut [f64], bx: &[Interval]) {
    for (v, iv) in u.iter_mut().zip(bx) {
        *v = iv.clamp(*v);
    }
}

fn projected_descent(q: &Polynomial, grad: &[Polynomial], bx: &[Interval], mut u: Vec<f64>) -> Vec<f64> {
    let m = u.len();
    let eval_g = |u: &[f64]| grad.iter().map(|g| g.eval_at(u)).collect::<Vec<f64>>();
    let mut f = q.eval_at(&u);
    let mut g = eval_g(&u);
    let mut alpha = 1.0;
    for _ in 0..500 {
        let mut trial_alpha = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            let mut t: Vec<f64> = (0..m).map(|k| u[k] - trial_alpha * g[k]).collect();
            project(&mut t, bx);
            let ft = q.eval_at(&t);
            let decrease: f64 = (0..m).map(|k| g[k] * (u[k] - t[k])).sum();
            if ft <= f - 1e-4 * decrease {
                accepted = Some((t, ft));
                break;
            }
            trial_alpha *= 0.5;
        }
        let Some((t, ft)) = accepted else { break };
        let gt = eval_g(&t);
        let s: Vec<f64> = (0..m).map(|k| t[k] - u[k]).collect();
        let y: Vec<f64> = (0..m).map(|k| gt[k] - g[k]).collect();
        let step: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        u = t;
        g = gt;
        let done = step <= 1e-14 * (1.0 + u.iter().fold(0.0f64, |a, v| a.max(v.abs()))) || (f - ft).abs() <= 1e-16 * (1.0 + f.abs());
        f = ft;
        if done {
            break;
        }
        alpha = if sy > 0.0 { s.iter().map(|v| v * v).sum::<f64>() / sy } else { 1.0 };
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::state_input_names;

    fn uni(s: &str) -> Polynomial {
        Polynomial::parse(s, &state_input_names(0, 1)).unwrap()
    }

    #[test]
    fn convex_quadratic_interior() {
        let (u, v) = minimize_over_box(&uni("3*u1 + u1^2"), &[Interval::new(-4.0, 4.0)]).unwrap();
        assert!((u[0] + 1.5).abs() < 1e-14);
        assert!((v + 2.25).abs() < 1e-14);
    }

    #[test]
    fn increasing_picks_left_endpoint() {
        let (u, _) = minimize_over_box(&uni("u1 + u1^3"), &[Interval::new(-1.0, 2.0)]).unwrap();
        assert_eq!(u, vec![-1.0]);
    }

    #[test]
    fn double_well_prefers_smaller_norm() {
        // minima at +-1 with equal value
        let (u, v) = minimize_over_box(&uni("u1^4 - 2*u1^2"), &[Interval::new(-3.0, 3.0)]).unwrap();
        assert!((u[0] + 1.0).abs() < 1e-9 || (u[0] - 1.0).abs() < 1e-9);
        assert!((v + 1.0).abs() < 1e-12);
        let (u, _) = minimize_over_box(&uni("u1^2"), &[Interval::new(-1.0, 1.0)]).unwrap();
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn roots_of_cubic() {
        let mut r = real_roots(&[-6.0, 11.0, -6.0, 1.0]);
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(real_roots(&[1.0, 0.0, 1.0]).is_empty());
    }

    #[test]
    fn two_inputs_box_constrained() {
        let names = state_input_names(0, 2);
        let q = Polynomial::parse("(u1 - 3)^2 + (u2 + 0.5)^2 + u1*u2", &names).unwrap();
        let (u, _) = minimize_over_box(&q, &[Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]).unwrap();
        // on the face u1 = 1: minimize (u2 + 0.5)^2 + u2 -> u2 = -1
        assert!((u[0] - 1.0).abs() < 1e-9 && (u[1] + 1.0).abs() < 1e-7, "{u:?}");
    }
}
