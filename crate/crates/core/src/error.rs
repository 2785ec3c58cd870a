use thiserror::Error;

/// Errors raised by the toolkit's samplers, solvers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("degenerate split: leading weight carries more than 2/3 of the squared mass (r = 1, ratio {ratio:.6})")]
    DegenerateSplit { ratio: f64 },

    #[error("parameter `{name}` out of range: {value} ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("rejection sampler gave up after {attempts} attempts")]
    RejectionExhausted { attempts: u64 },

    #[error("monte carlo estimate unstable: relative stderr {rel_stderr:.3} exceeds {limit}")]
    UnstableEstimate { rel_stderr: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected: "must lie in (0, 1)",
        })
    }
}
