use thiserror::Error;

/// Errors raised by model construction, numerics and simulation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed to converge or produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The Riccati system left the finite region (moment explosion).
    #[error("solution blew up at t = {time:.6} (|state| = {magnitude:.3e})")]
    Explosion { time: f64, magnitude: f64 },

    /// Inconsistent inputs, e.g. misaligned grids or a truncation that is too short.
    #[error("configuration error: {0}")]
    Config(String),

    /// The model violates an assumption required by the requested operation.
    #[error("model error: {0}")]
    Model(String),
}

impl Error {
    /// `true` for failures of numerical procedures as opposed to invalid inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Explosion { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
