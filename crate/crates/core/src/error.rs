//! Error type shared across the library and the CLI.

use std::fmt;

/// Unified error for configuration, numeric, and I/O failures.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration or arguments (bad field values, unknown keys).
    Config(String),
    /// Input outside a documented domain (e.g. t outside [0, 1]).
    Domain(String),
    /// Dimension mismatch between an input vector and the expected size.
    Shape { expected: usize, got: usize },
    /// Training diverged or failed to reach a required accuracy bar.
    Training { step: usize, message: String },
    /// Non-finite state or other failure while integrating a sample path.
    Sampling { step: usize, message: String },
    /// Adaptive step size underflow in the ODE solver.
    Stiffness { t: f64 },
    /// An operation was requested that the given model cannot provide.
    Capability(String),
    /// An internal contract was violated (malformed curve, empty input, ...).
    Contract(String),
    /// A file had unparseable or inconsistent contents.
    Format(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Shape { expected, got } => {
                write!(f, "shape error: expected dimension {expected}, got {got}")
            }
            Error::Training { step, message } => {
                write!(f, "training error at step {step}: {message}")
            }
            Error::Sampling { step, message } => {
                write!(f, "sampling error at step {step}: {message}")
            }
            Error::Stiffness { t } => {
                write!(f, "ode step size underflow near t = {t}")
            }
            Error::Capability(m) => write!(f, "capability error: {m}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Domain(_)
            | Error::Shape { .. }
            | Error::Contract(_)
            | Error::Format(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }

    /// Prefix the message with a pipeline stage name, preserving the kind.
    pub fn in_stage(self, stage: &str) -> Self {
        let tag = |m: String| format!("[stage {stage}] {m}");
        match self {
            Error::Config(m) => Error::Config(tag(m)),
            Error::Domain(m) => Error::Domain(tag(m)),
            Error::Shape { expected, got } => Error::Shape { expected, got },
            Error::Training { step, message } => Error::Training { step, message: tag(message) },
            Error::Sampling { step, message } => Error::Sampling { step, message: tag(message) },
            Error::Stiffness { t } => Error::Stiffness { t },
            Error::Capability(m) => Error::Capability(tag(m)),
            Error::Contract(m) => Error::Contract(tag(m)),
            Error::Format(m) => Error::Format(tag(m)),
            Error::Io(e) => Error::Io(e),
        }
    }
}
