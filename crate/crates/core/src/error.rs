//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or precondition check rejected its input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// ODE state became non-finite while stepping.
    #[error("integration failure at t = {time} s: state is not finite")]
    IntegrationFailure { time: f64 },

    /// An input that makes the requested quantity undefined (e.g. zero mean flow).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Cycles too dissimilar to overlay on a common interval.
    #[error("cycle synchronization failed: {0}")]
    Synchronization(String),

    /// Every optimizer start failed; carries per-start diagnostics.
    #[error("optimization failure: {0}")]
    Optimization(String),

    /// Covariance factorization failed even at maximum jitter.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// Replicate study exceeded its failure budget.
    #[error("replicate study failed: {0}")]
    Study(String),

    /// MCMC could not produce usable draws.
    #[error("mcmc failure: {0}")]
    Mcmc(String),

    /// Calibration pipeline failure tagged with the stage that raised it.
    #[error("calibration stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Malformed data file; `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Malformed or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the name of the calibration stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
