use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LbmError>;

#[derive(Debug, Error)]
pub enum LbmError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("tensor file: {0}")]
    Format(String),

    #[error("drift singularity: t = {0} is too close to 1")]
    Singularity(f64),

    #[error("t = {0} is outside [0, 1]")]
    TimeRange(f64),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("t = {0} is not in the training support")]
    SupportViolation(f64),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("config error{}: {field}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },
}

impl LbmError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        LbmError::Config {
            line: None,
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            LbmError::Config { .. } => 1,
            _ => 2,
        }
    }
}
