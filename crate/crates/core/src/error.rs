use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("time {t} is outside the path domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("time {t} is not a multiple of the grid step {h}")]
    NotOnGrid { t: f64, h: f64 },

    #[error("pullback truncation did not converge before the path domain ran out (last = {last}, previous = {previous})")]
    DomainExhausted { last: f64, previous: f64 },

    #[error("state {state} does not belong to system {system}")]
    KindMismatch { system: String, state: String },

    #[error("negative time {0} passed to a forward cocycle")]
    NegativeTime(f64),

    #[error("Euler-Maruyama diverged at step {step} (|x| = {magnitude})")]
    Divergence { step: usize, magnitude: f64 },

    #[error("no almost period found in window [0, {window}] for epsilon {epsilon}")]
    WindowTooSmall { epsilon: f64, window: f64 },

    #[error("almost-period set is empty")]
    EmptyTauSet,

    #[error("factorized measures do not share their omega ids")]
    MarginalMismatch,

    #[error("fresh noise ensemble shares its master seed {0} with the measure provenance")]
    Independence(u64),

    #[error("measure error: {0}")]
    Measure(String),

    #[error("linear program failure: {0}")]
    Lp(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
