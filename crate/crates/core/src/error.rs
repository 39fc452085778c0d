use thiserror::Error;

/// Errors raised by the controller stack, the simulator and the environment.
#[derive(Debug, Error)]
pub enum Error {
    #[error("target ({x:.4}, {y:.4}, {z:.4}) is outside the workspace of leg {leg}", x = target[0], y = target[1], z = target[2])]
    Unreachable { leg: usize, target: [f64; 3] },

    #[error("leg {leg} is not in a swing window at phase {phase:.6}")]
    NotInSwing { leg: usize, phase: f64 },

    #[error("QP solver reached the iteration limit ({iterations} iterations)")]
    QpIterationLimit { iterations: usize },

    #[error("QP solver failed: {0}")]
    QpNumerical(String),

    #[error("simulation diverged at t = {time:.4} s: {reason}")]
    SimDiverged { time: f64, reason: String },

    #[error("replay log exhausted at step {step}")]
    ReplayExhausted { step: usize },

    #[error("step called on a finished episode")]
    SteppedAfterDone,

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
