use thiserror::Error;

/// Every failure the library can report.
///
/// The variants are grouped by the CLI into data errors (bad input) and
/// algorithmic errors (a routine could not produce a certified answer).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix has no eigenvalue above the rank cutoff")]
    ZeroMatrix,
    #[error("exact oracle limited to dimension <= 3, got {0}")]
    OracleLimit(usize),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("coreset is empty")]
    EmptyCoreset,
    #[error("need more than {k} rows, have {have}")]
    InsufficientRows { k: usize, have: usize },
    #[error("row norm {norm} outside band [{lo}, {hi}]")]
    NormBand { norm: f64, lo: f64, hi: f64 },
    #[error("stream overflow: declared {0} rows")]
    StreamOverflow(usize),
    #[error("quadratic form is numerically singular")]
    SingularQuadratic,
    #[error("pass budget of {0} exceeded")]
    PassBudgetExceeded(usize),
    #[error("weight kind mismatch: {0}")]
    KindMismatch(String),
    #[error("weights sum to zero")]
    DegenerateWeights,
    #[error("stream is empty")]
    EmptyStream,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("objective is unbounded over the feasible region")]
    Unbounded,
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("solver did not converge after {iterations} iterations (best residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("cover fraction not reached within {0} draws")]
    RetryBudget(usize),
    #[error("io error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by the input data rather than by an algorithm.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::NonFinite
                | Error::ShapeMismatch(_)
                | Error::Io(_)
                | Error::Format(_)
                | Error::EmptyStream
                | Error::NormBand { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite => "NonFinite",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ZeroMatrix => "ZeroMatrix",
            Error::OracleLimit(_) => "OracleLimit",
            Error::SizeLimit(_) => "SizeLimit",
            Error::EmptyCoreset => "EmptyCoreset",
            Error::InsufficientRows { .. } => "InsufficientRows",
            Error::NormBand { .. } => "NormBand",
            Error::StreamOverflow(_) => "StreamOverflow",
            Error::SingularQuadratic => "SingularQuadratic",
            Error::PassBudgetExceeded(_) => "PassBudgetExceeded",
            Error::KindMismatch(_) => "KindMismatch",
            Error::DegenerateWeights => "DegenerateWeights",
            Error::EmptyStream => "EmptyStream",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::Unbounded => "Unbounded",
            Error::Infeasible => "Infeasible",
            Error::RankDeficient => "RankDeficient",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::RetryBudget(_) => "RetryBudget",
            Error::Io(_) => "Io",
            Error::Format(_) => "Format",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
