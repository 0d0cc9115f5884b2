use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain [0, {length}]")]
    OutOfDomain { point: Vec<f64>, length: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("explicit integration diverged with time step {dt:e} s at t = {time:e} s")]
    Divergence { dt: f64, time: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("mesh is not aligned with the unit cells: {0}")]
    Alignment(String),

    #[error("regression system is underdetermined: {rows} rows for {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("regression system is rank deficient: {deficient} of {cols} columns are numerically dependent")]
    RankDeficient { deficient: usize, cols: usize },

    #[error("missing data: {0}")]
    Coverage(String),

    #[error("relative error is undefined because the reference has zero norm")]
    UndefinedRelativeError,

    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
