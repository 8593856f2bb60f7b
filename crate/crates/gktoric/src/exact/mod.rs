//! Exact rational arithmetic: vectors, matrices, and multivariate polynomials.

pub mod polynomial;
pub mod rational;

pub use polynomial::{Expo, QPoly};
pub use rational::{q, q_from_f64, q_to_f64, qi, QMat, Q};
