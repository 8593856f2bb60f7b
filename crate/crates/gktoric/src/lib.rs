//! Numerical toolkit for extremal generalized Kähler structures on toric
//! manifolds.
//!
//! The pipeline works entirely in momentum coordinates on a labeled Delzant
//! polytope: symplectic potentials `u = u0 + v` (Guillemin part plus a smooth
//! polynomial correction) together with a constant antisymmetric pair
//! `(A, B)` encode the geometry, the fourth-order Abreu-type operator
//! evaluates the generalized scalar curvature, and the extremal equation
//! `kappa(u, 0, B) = l_ext` is solved by minimizing the convex Mabuchi
//! energy over the correction coefficients.
//!
//! Modules:
//! - [`polytope`]: labeled Delzant polytopes, exact rational moments, the
//!   label boundary measure, graded quadrature.
//! - [`potential`]: symplectic potentials and admissibility.
//! - [`curvature`]: the Abreu-type operator, pointwise biHermitian frames,
//!   algebraic identity checks, and an independent curvature cross-check.
//! - [`extremal`]: the extremal affine function, Donaldson-Futaki
//!   functional, and K-stability probes.
//! - [`mabuchi`]: Mabuchi energy, its variations, and linear geodesics.
//! - [`solver`]: continuation solver for the extremal equation.

pub mod curvature;
pub mod error;
pub mod exact;
pub mod extremal;
pub mod mabuchi;
pub mod polytope;
pub mod potential;
pub mod solver;

pub use error::{Error, Result};
pub use polytope::{AffineFunction, DelzantPolytope, DiagnosticReport, PolytopeSpec};
