//! Shared inputs for the benchmarks.

use pwamc::polynomial::{monomials_up_to, Polynomial};
use pwamc::relaxation::{solve_order, RelaxationOptions};
use pwamc::builtin_example;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense polynomial in `nvars` variables with seeded coefficients in [-1, 1].
pub fn random_dense(nvars: usize, degree: u32, seed: u64) -> Polynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Polynomial::from_terms(nvars, monomials_up_to(nvars, degree).into_iter().map(|m| (m, rng.random_range(-1.0..1.0))))
}

/// Value function of the built-in example at relaxation order `d`.
pub fn example_value_function(d: u32) -> Polynomial {
    let ocp = builtin_example();
    solve_order(&ocp, d, &RelaxationOptions::default()).expect("solve").value.v
}
