use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polytope failed Delzant validation: {0}")]
    InvalidPolytope(String),
    #[error("point is not strictly interior to the polytope")]
    NotInterior,
    #[error("matrix is numerically singular (condition above {0:.3e})")]
    SingularMatrix(f64),
    #[error("potential is not admissible: {0}")]
    Inadmissible(String),
    #[error("quadrature level {0} outside supported range {1}..={2}")]
    BadQuadratureLevel(u32, u32, u32),
    #[error("degree must be nonnegative and at most {0}")]
    BadDegree(u32),
    #[error("polytope mismatch between operands")]
    PolytopeMismatch,
    #[error("quadrature measure mismatch: expected {0}")]
    MeasureMismatch(&'static str),
    #[error("matrix must be antisymmetric")]
    NotAntisymmetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("line search failed: {0}")]
    LineSearchFailed(String),
    #[error("empty probe family")]
    EmptyProbeFamily,
    #[error("degenerate Poisson locus: det(I - J) below threshold at the sample point")]
    DegeneratePoisson,
    #[error("finite-difference stencil exits the polytope")]
    StencilExitsPolytope,
    #[error("internal: {0}")]
    Internal(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
