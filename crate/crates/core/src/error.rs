use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid problem dimensions n={n}, m={m}")]
    InvalidDimension { n: usize, m: usize },
    #[error("{what} is numerically singular")]
    SingularSystem { what: &'static str },
    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    InaccurateSolve { residual: f64, tol: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("merit parameter update produced non-positive tau {tau}")]
    NonPositiveTau { tau: f64 },
    #[error("ratio parameter update produced non-positive xi {xi}")]
    NonPositiveXi { xi: f64 },
    #[error("division by zero in {what}")]
    DivisionByZero { what: &'static str },
    #[error("stepsize interval is empty: [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("reduced Hessian curvature {min_eig} below {zeta} at iteration {k}")]
    CurvatureViolation { k: usize, min_eig: f64, zeta: f64 },
    #[error("problem does not provide {what}")]
    Unsupported { what: &'static str },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("beta schedule is empty")]
    EmptySchedule,
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("constant {name} must be positive, got {value}")]
    InvalidConstant { name: &'static str, value: f64 },
    #[error("{field}: {reason}")]
    InvalidConfig { field: String, reason: String },
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
