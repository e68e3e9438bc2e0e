use thiserror::Error;

/// Errors raised by fitting, calibration and monitoring.
#[derive(Debug, Error)]
pub enum DriftError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("covariance is numerically singular ({0}); increase epsilon")]
    Conditioning(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("outer replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<DriftError>,
    },

    #[error("unsupported artifact version `{0}`")]
    Version(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DriftError {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        match self {
            DriftError::DegenerateDesign(_)
            | DriftError::Conditioning(_)
            | DriftError::Divergence { .. } => true,
            DriftError::Replicate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, DriftError>;
