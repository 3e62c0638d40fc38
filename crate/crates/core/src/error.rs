use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    Argument(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("grid point t[{index}] = {t} cannot be represented above delta = {delta}")]
    Infeasible { index: usize, t: f64, delta: f64 },
    #[error("missing history: {0}")]
    State(&'static str),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("degenerate fit: {0}")]
    Degenerate(&'static str),
    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite { iteration: usize, quantity: &'static str },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
