use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid signal: {0}")]
    Signal(String),
    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overlap-add envelope {value:e} below tolerance at sample {index}")]
    Cola { index: usize, value: f64 },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("objective diverged at iteration {iteration}: {value}")]
    Divergence { iteration: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
