use alloc::string::String;

use crate::solver::IterationDiagnostics;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {len} sources")]
    Index { index: usize, len: usize },

    #[error("frame is not tight: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NotTight { residual: f64, tolerance: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("solver diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        diagnostics: IterationDiagnostics,
    },

    #[error("zero reference signal")]
    ZeroReference,
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::Error::Config(alloc::format!($($arg)*))
    };
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::Error::Shape(alloc::format!($($arg)*))
    };
}

pub(crate) use config_err;
pub(crate) use shape_err;
