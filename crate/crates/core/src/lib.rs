//! Moment-LMI relaxations for continuous-time piecewise-affine optimal
//! control, value-function recovery from the dual, and sample-and-hold
//! feedback synthesis.

pub mod bench;
pub mod moments;
pub mod policy;
pub mod polynomial;
pub mod problem;
pub mod relaxation;

pub use polynomial::{Monomial, Polynomial};
pub use problem::{builtin_example, parse_problem, PwaOcp};
pub mod sdp;
