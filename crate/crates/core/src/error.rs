use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}, column `{column}`: cannot parse `{value}`")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}, column `{column}`: missing value")]
    MissingValue { line: usize, column: String },
    #[error("line {line}: censoring flag must be 0 or 1, found `{value}`")]
    CensoringFlag { line: usize, value: String },
    #[error("need at least 2 observations, found {0}")]
    TooFewRows(usize),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("empty design matrix")]
    EmptyMatrix,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("covariance result is not finite: {0}")]
    NonFinite(String),
    #[error("Bessel K evaluation overflowed at nu = {nu}, d = {d}")]
    BesselOverflow { nu: f64, d: f64 },
    #[error("partial covariance update needs rho_old > 0; rebuild the matrix instead")]
    PartialUpdateUndefined,
    #[error("Cholesky factorization failed at maximum jitter {jitter:e} (condition estimate {condition:e})")]
    Factorization { jitter: f64, condition: f64 },
    #[error("all observations are censored")]
    AllCensored,
    #[error("wrong model kind: {0}")]
    WrongModel(String),
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sampler aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
