use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure classes used across the library.
///
/// [`Error::class`] groups them into input problems and numerical failures,
/// which the command line maps to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate region: lower bound {lower} is not below upper bound {upper} in dimension {dim}")]
    DegenerateRegion { dim: usize, lower: f64, upper: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("function {index} is linearly dependent on its predecessors (residual norm {residual:e}, initial norm {initial:e})")]
    LinearDependence {
        index: usize,
        residual: f64,
        initial: f64,
    },

    #[error("quadrature did not converge for {what}: last refinement changed the estimate by {change:e}")]
    QuadratureNonConvergence { what: String, change: f64 },

    #[error("ill-conditioned Gram matrix (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("sample is empty after region filtering")]
    EmptySample,

    #[error("singular covariance: eigenvalue {eigenvalue:e} along eigenvector {eigenvector:?}")]
    SingularCovariance {
        eigenvalue: f64,
        eigenvector: Vec<f64>,
    },

    #[error("normalization constraint cannot be satisfied: every basis integral is zero")]
    UnsatisfiableConstraint,

    #[error("point {point:?} lies outside the family domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("weight kind mismatch: expected {expected}, found {found}")]
    WeightKindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("second derivatives are not available for {0}")]
    MissingDerivatives(String),

    #[error("kernel integrates to {integral}, not 1")]
    KernelNotNormalized { integral: f64 },

    #[error("kernel is asymmetric: k({h}) = {left}, k(-{h}) = {right}")]
    KernelAsymmetric { h: f64, left: f64, right: f64 },

    #[error("density is negative ({value:e}) at {point:?}")]
    NegativeDensity { value: f64, point: Vec<f64> },

    #[error("rejection sampler acceptance rate {rate:e} is below the 1e-4 floor")]
    LowAcceptance { rate: f64 },

    #[error("grid spacing {spacing:e} exceeds epsilon/4 = {limit:e}")]
    UnderResolvedGrid { spacing: f64, limit: f64 },

    #[error("insufficient input: need {needed} values, got {got}")]
    InsufficientInput { needed: usize, got: usize },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::LinearDependence { .. }
            | Error::QuadratureNonConvergence { .. }
            | Error::IllConditioned { .. }
            | Error::SingularCovariance { .. }
            | Error::UnsatisfiableConstraint
            | Error::LowAcceptance { .. } => ErrorClass::Numerical,
            Error::Trial { source, .. } => source.class(),
            _ => ErrorClass::Input,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
