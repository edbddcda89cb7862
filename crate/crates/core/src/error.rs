use thiserror::Error;

/// Errors raised by the fitting engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid {width}x{height}: need 1 <= width*height <= {max}", max = crate::MAX_PIXELS)]
    InvalidGrid { width: usize, height: usize },

    #[error("pixel buffer holds {got} values but the grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite pixel value at index {index}")]
    NonFinitePixel { index: usize },

    #[error("profile is numerically constant; amplitude and background are not separable")]
    SingularProfile,

    #[error("damped normal matrix is numerically singular")]
    StepFailed,

    #[error("length mismatch: {left} vs {right}")]
    MismatchedLengths { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("worker pool: {0}")]
    WorkerPool(String),
}

impl Error {
    /// True for errors caused by the caller's image data rather than the numerics.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid { .. } | Error::LengthMismatch { .. } | Error::NonFinitePixel { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
