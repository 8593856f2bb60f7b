//! Input resolution: built-in polytope library, antisymmetric matrix
//! parsing, and potential checkpoints.

use gktoric::polytope::PolytopeSpec;
use gktoric::potential::{PoissonDatum, SymplecticPotential};
use gktoric::solver::PotentialCheckpoint;
use gktoric::DelzantPolytope;
use nalgebra::DMatrix;
use std::sync::Arc;

pub const BUILTINS: &[(&str, &str)] = &[
    ("segment", include_str!("../polytopes/segment.json")),
    ("square", include_str!("../polytopes/square.json")),
    ("simplex", include_str!("../polytopes/simplex.json")),
    ("trapezoid", include_str!("../polytopes/trapezoid.json")),
    ("hirzebruch2", include_str!("../polytopes/hirzebruch2.json")),
];

#[derive(Debug)]
pub enum InputError {
    Parse(String),
    Validation(String),
    Io(String),
}

pub fn load_spec(arg: &str) -> Result<PolytopeSpec, InputError> {
    let text = if let Some((_, builtin)) = BUILTINS.iter().find(|(name, _)| *name == arg) {
        (*builtin).to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| InputError::Io(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| InputError::Parse(format!("{arg}: {e}")))
}

pub fn load_polytope(arg: &str) -> Result<Arc<DelzantPolytope>, InputError> {
    let spec = load_spec(arg)?;
    DelzantPolytope::from_spec(&spec)
        .map(Arc::new)
        .map_err(|e| InputError::Validation(e.to_string()))
}

/// Accepts "zero", inline JSON ("[[0,0.1],[-0.1,0]]"), or a file path.
pub fn parse_matrix(arg: &str, dim: usize) -> Result<DMatrix<f64>, InputError> {
    if arg == "zero" {
        return Ok(DMatrix::zeros(dim, dim));
    }
    let text = if arg.trim_start().starts_with('[') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| InputError::Io(format!("{arg}: {e}")))?
    };
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| InputError::Parse(format!("matrix: {e}")))?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(InputError::Parse(format!(
            "matrix must be {dim}x{dim} for this polytope"
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

pub fn datum_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<PoissonDatum, InputError> {
    PoissonDatum::new(a.clone(), b.clone()).map_err(|e| InputError::Parse(e.to_string()))
}

/// "guillemin" or a checkpoint path.
pub fn load_potential(
    arg: &str,
    poly: &Arc<DelzantPolytope>,
) -> Result<SymplecticPotential, InputError> {
    if arg == "guillemin" {
        return Ok(SymplecticPotential::guillemin(poly.clone()));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| InputError::Io(format!("{arg}: {e}")))?;
    let cp: PotentialCheckpoint =
        serde_json::from_str(&text).map_err(|e| InputError::Parse(format!("{arg}: {e}")))?;
    cp.to_potential(poly.clone())
        .map_err(|e| InputError::Parse(e.to_string()))
}
