use thiserror::Error;

/// Errors produced by the estimators, the formula evaluators and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular local system at u0 = {location:?}")]
    SingularFit { location: Vec<f64> },

    #[error(
        "insufficient support at u0 = {location:?}: {positive} observations with positive weight \
         ({required} required), effective_n = {effective_n}"
    )]
    InsufficientSupport {
        location: Vec<f64>,
        effective_n: f64,
        positive: usize,
        required: usize,
    },

    #[error("quadrature did not converge on [{lower}, {upper}]")]
    QuadratureNonConvergence { lower: f64, upper: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("no finite optimal bandwidth: {0}")]
    NoFiniteOptimum(String),

    #[error("every bandwidth candidate failed: {0}")]
    AllCandidatesFailed(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularFit { .. }
                | Error::InsufficientSupport { .. }
                | Error::QuadratureNonConvergence { .. }
                | Error::SingularMatrix(_)
                | Error::NoFiniteOptimum(_)
                | Error::AllCandidatesFailed(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::SingularFit { .. } => "singular_fit",
            Error::InsufficientSupport { .. } => "insufficient_support",
            Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
            Error::SingularMatrix(_) => "singular_matrix",
            Error::NoFiniteOptimum(_) => "no_finite_optimum",
            Error::AllCandidatesFailed(_) => "all_candidates_failed",
            Error::DegenerateGrid(_) => "degenerate_grid",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}
