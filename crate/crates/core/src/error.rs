use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid scale factor 1 + r = {0}")]
    InvalidScale(f64),
    #[error("condition (A) violated: {0}")]
    ConditionA(String),
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("spacing {h} does not fit the lattice of the domain (extent {extent})")]
    LatticeMismatch { h: f64, extent: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Legendre coefficient mismatch at xi = {xi}: residual {residual:e} above {tolerance:e}")]
    CoefficientMismatch { xi: f64, residual: f64, tolerance: f64 },
    #[error("negative transition weight at node {node}, velocity {velocity}")]
    Assembly { node: usize, velocity: usize },
    #[error("node {0} has no admissible velocity")]
    NoAdmissibleVelocity(usize),
    #[error("policy iteration did not converge in {iterations} iterations (residual {residual:e})")]
    Divergence { iterations: usize, residual: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("comparison violated: min gap {min_gap:e} at node {node}")]
    ComparisonViolation { min_gap: f64, node: usize },
    #[error("linear program infeasible: {0}")]
    Infeasible(String),
    #[error("linear program unbounded")]
    Unbounded,
    #[error("measure does not fit the target grid: {0}")]
    ScalingMismatch(String),
    #[error("samples are not equispaced")]
    NotEquispaced,
    #[error("function is not normalized: L2 norm {0}")]
    Normalization(f64),
    #[error("eigenfunction is not positive at node {0}")]
    TransformDomain(usize),
    #[error("eigen-iteration stagnated (residual {0:e})")]
    Stagnation(f64),
    #[error("sequence is not Cauchy: residuals {0:?}")]
    NotCauchy(Vec<f64>),
    #[error("csv output: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
