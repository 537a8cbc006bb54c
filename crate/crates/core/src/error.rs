use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),

    #[error("value out of numeric range: {0}")]
    NumericRange(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    /// A default rate of exactly 0 or 1 has no finite probit transform.
    #[error("default rate {rate} in period {period} has no finite probit transform")]
    TransformUndefined { period: usize, rate: f64 },

    #[error("systematic factor is unidentified when the asset correlation is zero")]
    LatentUnidentified,

    #[error("truncated proposal window carries no probability mass (sd = {sd}, window [{lower}, {upper}])")]
    ProposalDegenerate { sd: f64, lower: f64, upper: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable process exit code: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::InvalidPortfolio(_) | Error::Config(_) => 1,
            Error::InsufficientData(_)
            | Error::LengthMismatch { .. }
            | Error::InvalidData(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::TransformUndefined { .. } => 2,
            Error::NumericRange(_)
            | Error::DegenerateDensity(_)
            | Error::LatentUnidentified
            | Error::ProposalDegenerate { .. } => 3,
        }
    }
}
