use alloc::string::String;

/// Errors raised by the estimators and their numerical backends.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("matrix is not positive semidefinite: eigenvalue {min:e} against largest {max:e}")]
    NotPsd { min: f64, max: f64 },
    #[error("requested {requested} components but only {achievable} are numerically supported")]
    Rank { requested: usize, achievable: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("eigendecomposition did not converge")]
    NoConvergence,
    #[error("oracle invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! input_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Input(alloc::format!($($arg)*))
    };
}

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(alloc::format!($($arg)*))
    };
}

pub(crate) use dim_err;
pub(crate) use input_err;
