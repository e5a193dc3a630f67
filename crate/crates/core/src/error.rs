use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Attitude error outside the small-angle regime of the linearized error model.
    #[error("attitude error of {angle} rad exceeds the small-angle limit of {limit} rad")]
    LargeAngle { angle: f64, limit: f64 },

    /// The range minimum sits on the first or last pulse, so closest approach
    /// is not observed inside the aperture.
    #[error("closest approach falls on aperture edge (pulse {index} of {n_pulses})")]
    EdgeMinimum { index: usize, n_pulses: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("profile through peak never falls below the 3 dB threshold along {axis}")]
    Unbounded { axis: &'static str },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("malformed container {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Wraps the error with a short description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for configuration problems (bad input), false for failures at run time.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Parse { .. } | Error::LargeAngle { .. } => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            3
        }
    }
}
