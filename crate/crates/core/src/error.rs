use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type used
/// for the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("aspect ratio c[{index}] = {value} must be positive")]
    NonPositiveAspectRatio { index: usize, value: f64 },
    #[error("signal strength theta[{table}, {component}] = {value} must be nonnegative")]
    NegativeTheta {
        table: usize,
        component: usize,
        value: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("requested rank {requested} exceeds the maximum {max}")]
    RankTooLarge { requested: usize, max: usize },
    #[error("iterative SVD did not converge within {restarts} restarts (residual {residual:e})")]
    ConvergenceFailure { restarts: usize, residual: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("top eigenvalue is not simple (gap {gap:e})")]
    DegenerateTopEigenvalue { gap: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("table subset is empty")]
    SubsetEmpty,
    #[error("subset enumeration needs m <= {cap}, got m = {m}")]
    TooManyTablesForEnumeration { m: usize, cap: usize },
    #[error("secular equation has no root: every theta_i * w_i is zero")]
    NoSecularRoot,
    #[error("component {component} is tied with component {other} under its own weighting")]
    AmbiguousComponentOrder { component: usize, other: usize },
    #[error("epsilon {0} is outside the supported range")]
    EpsilonOutOfRange(f64),
    #[error("no outlier singular value: sigma_1^2 = {sigma_sq} does not exceed the bulk edge {edge}")]
    NoOutlierSingularValue { sigma_sq: f64, edge: f64 },
    #[error("reference table is below the detectability threshold")]
    ReferenceBelowThreshold,
    #[error("every table is below the detectability threshold")]
    AllTablesBelowThreshold,
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    #[error("count matrix has a negative entry {value} at ({row}, {col})")]
    NegativeCounts { row: usize, col: usize, value: i64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable machine-readable code, printed by the command-line tool.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonPositiveAspectRatio { .. } => "NonPositiveAspectRatio",
            Error::NegativeTheta { .. } => "NegativeTheta",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::RankTooLarge { .. } => "RankTooLarge",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::DegenerateTopEigenvalue { .. } => "DegenerateTopEigenvalue",
            Error::InvalidWeights(_) => "InvalidWeights",
            Error::SubsetEmpty => "SubsetEmpty",
            Error::TooManyTablesForEnumeration { .. } => "TooManyTablesForEnumeration",
            Error::NoSecularRoot => "NoSecularRoot",
            Error::AmbiguousComponentOrder { .. } => "AmbiguousComponentOrder",
            Error::EpsilonOutOfRange(_) => "EpsilonOutOfRange",
            Error::NoOutlierSingularValue { .. } => "NoOutlierSingularValue",
            Error::ReferenceBelowThreshold => "ReferenceBelowThreshold",
            Error::AllTablesBelowThreshold => "AllTablesBelowThreshold",
            Error::InvalidPlan(_) => "InvalidPlan",
            Error::NegativeCounts { .. } => "NegativeCounts",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
