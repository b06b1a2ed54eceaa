use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use pwamc::moments::{
    analytic_moments, build_localizing_template, build_moment_template, instantiate, riesz, MomentBasis, MomentVector,
};
use pwamc::polynomial::{monomials_up_to, Monomial, Polynomial};
use pwamc::problem::InitialMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_moments(rng: &mut ChaCha8Rng, nvars: usize, d: u32) -> MomentVector {
    let basis = Arc::new(MomentBasis::new(nvars, d));
    let values = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MomentVector::new(basis, values)
}

#[test]
fn quadratic_form_matches_riesz_of_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for instance in 0..100 {
        let nvars = 1 + instance % 3;
        let d = 1 + (instance as u32 % 3);
        let y = random_moments(&mut rng, nvars, d);
        let t = build_moment_template(nvars, d);
        let m = instantiate(&t, &y).unwrap();
        let rows = monomials_up_to(nvars, d);
        let q: Vec<f64> = (0..rows.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let qp = Polynomial::from_terms(nvars, rows.iter().cloned().zip(q.iter().copied()));
        let qv = nalgebra::DVector::from_vec(q);
        let lhs = (qv.transpose() * &m * &qv)[(0, 0)];
        let rhs = riesz(&y, &qp.multiply(&qp).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10, "instance {instance}: {lhs} vs {rhs}");
    }
}

#[test]
fn dirac_moment_matrices_have_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let nvars = rng.random_range(1..=3);
        let point: Vec<f64> = (0..nvars).map(|_| rng.random_range(-1.0..1.0)).collect();
        let basis = Arc::new(MomentBasis::new(nvars, 2));
        let y = analytic_moments(&InitialMeasure::Dirac(point), basis).unwrap();
        let m = instantiate(&build_moment_template(nvars, 2), &y).unwrap();
        let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!(eig[0] > 0.0);
        assert!(eig[1] <= 1e-10 * eig[0], "{eig:?}");
        assert!(eig.last().unwrap() >= &(-1e-10 * eig[0]));
    }
}

#[test]
fn dirac_fixture_is_exact() {
    let p = vec![0.5, -2.0];
    let basis = Arc::new(MomentBasis::new(2, 3));
    let y = analytic_moments(&InitialMeasure::Dirac(p.clone()), Arc::clone(&basis)).unwrap();
    for (m, v) in basis.monomials().iter().zip(&y.values) {
        let e = m.exponents();
        assert_eq!(*v, p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32));
    }
}

#[test]
fn uniform_fixtures_match_integrals() {
    // normalized integrals (b^(k+1) - a^(k+1)) / ((k + 1)(b - a))
    let integral = |a: f64, b: f64, k: i32| (b.powi(k + 1) - a.powi(k + 1)) / ((k + 1) as f64 * (b - a));
    for (a, b) in [(0.0, 1.0), (-2.0, 2.0), (1.0, 3.0), (-0.5, 0.25)] {
        let basis = Arc::new(MomentBasis::new(1, 5));
        let y = analytic_moments(&InitialMeasure::UniformBox { lo: vec![a], hi: vec![b] }, basis).unwrap();
        for k in 0..=10 {
            let exact = integral(a, b, k);
            assert!((y.values[k as usize] - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "[{a},{b}] k={k}");
        }
    }
    let basis = Arc::new(MomentBasis::new(2, 2));
    let y = analytic_moments(
        &InitialMeasure::UniformBox { lo: vec![0.0, -1.0], hi: vec![1.0, 3.0] },
        Arc::clone(&basis),
    )
    .unwrap();
    for (m, v) in basis.monomials().iter().zip(&y.values) {
        let e = m.exponents();
        let exact = integral(0.0, 1.0, e[0] as i32) * integral(-1.0, 3.0, e[1] as i32);
        assert!((v - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }
}

#[test]
fn lebesgue_unit_interval_matrix() {
    let basis = Arc::new(MomentBasis::new(1, 1));
    let y = analytic_moments(&InitialMeasure::UniformBox { lo: vec![0.0], hi: vec![1.0] }, basis).unwrap();
    let m = instantiate(&build_moment_template(1, 1), &y).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0 / 3.0]);
    assert!((m - expected).abs().max() <= 1e-15);
}

#[test]
fn unit_guard_reduces_to_moment_template() {
    for nvars in 1..=3 {
        for d in 0..=3 {
            let a = build_localizing_template(&Polynomial::constant(nvars, 1.0), nvars, d).unwrap();
            let b = build_moment_template(nvars, d);
            assert_eq!(a.side, b.side);
            for i in 0..a.side {
                for j in 0..a.side {
                    assert_eq!(a.entry(i, j), b.entry(i, j));
                }
            }
        }
    }
}

#[test]
fn templates_are_symmetric_and_within_basis() {
    let g = Polynomial::from_terms(2, [(Monomial::one(2), 4.0), (Monomial::new(vec![2, 0]), -1.0), (Monomial::new(vec![1, 1]), 0.5)]);
    for d in 1..=4 {
        let t = build_localizing_template(&g, 2, d).unwrap();
        assert_eq!(t.side, monomials_up_to(2, d - 1).len());
        assert!(t.positions_needed() <= MomentBasis::new(2, d).len());
        for i in 0..t.side {
            for j in 0..t.side {
                assert_eq!(t.entry(i, j), t.entry(j, i));
            }
        }
    }
}

proptest! {
    #[test]
    fn riesz_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_moments(&mut rng, 2, 2);
        let z = random_moments(&mut rng, 2, 2);
        let monos = monomials_up_to(2, 4);
        let p = Polynomial::from_terms(2, monos.iter().map(|m| (m.clone(), rng.random_range(-1.0..1.0))));
        let q = Polynomial::from_terms(2, monos.iter().map(|m| (m.clone(), rng.random_range(-1.0..1.0))));
        let comb = p.scale(a).add(&q.scale(b)).unwrap();
        let lhs = riesz(&y, &comb).unwrap();
        let rhs = a * riesz(&y, &p).unwrap() + b * riesz(&y, &q).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let yz = MomentVector::new(y.basis.clone(), y.values.iter().zip(&z.values).map(|(u, v)| a * u + b * v).collect());
        let lhs = riesz(&yz, &p).unwrap();
        let rhs = a * riesz(&y, &p).unwrap() + b * riesz(&z, &p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}
