use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix is not antisymmetric (|m + m^T| = {0:e})")]
    NotAntisymmetric(f64),

    #[error("A_Z block is singular: smallest singular value {min_singular_value:e}")]
    SingularAuxiliary { min_singular_value: f64 },

    #[error("element left the group: {0}")]
    NotInGroup(String),

    #[error("non-finite {0}; check the gain configuration")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gain condition violated: margin {margin:.6} <= 0")]
    InfeasibleGains { margin: f64 },

    #[error("initial P violates bound `{bound}`: {value} not in [{lower}, {upper}]")]
    IntervalViolation {
        bound: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("GNSS schedule is not persistently exciting for T = {period}, tau = {on}: window at t = {at} has longest on-run {longest}")]
    NotPersistentlyExciting {
        period: f64,
        on: f64,
        at: f64,
        longest: f64,
    },

    #[error("aborted at step {step}: {source}")]
    Aborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
