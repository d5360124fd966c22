use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("coarse cell {cell} collapsed at t = {time}: width {width:.3e} <= {threshold:.3e}")]
    CellCollapse {
        cell: usize,
        time: f64,
        width: f64,
        threshold: f64,
    },

    #[error("ODE integration failed at t = {time}: {reason}")]
    OdeFailure { time: f64, reason: String },

    #[error("singular linear system (pivot {pivot} is zero)")]
    SingularMatrix { pivot: usize },

    #[error("non-finite values after step {step}")]
    NonFinite { step: usize },

    #[error("stored local matrices missing for cell {cell} at step {step}")]
    MissingSystems { cell: usize, step: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CellCollapse { .. }
                | Error::OdeFailure { .. }
                | Error::SingularMatrix { .. }
                | Error::NonFinite { .. }
                | Error::MissingSystems { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
