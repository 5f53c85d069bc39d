use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cube at level {level} is below resolution (lattice level {max_level})")]
    BelowResolution { level: u32, max_level: u32 },

    #[error("cannot climb {steps} levels from a cube at level {level}: above root")]
    AboveRoot { level: u32, steps: u32 },

    #[error("region is not aligned to the lattice: {0}")]
    NotAligned(String),

    #[error("non-integrable power weight: exponent {exponent} <= -{dim}")]
    NonIntegrable { exponent: f64, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lattice too large for {what} ({detail}); use the shifted-grid surrogate or a coarser lattice")]
    SizeGuard { what: &'static str, detail: String },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("chain hypothesis violated: {0}")]
    ChainHypothesis(String),

    #[error("remaining collection is not empty ({count} cubes); first witness at level {}", certificate.cube.level)]
    NonEmptyRemainder { count: usize, certificate: Box<crate::proof::ChainCertificate> },

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
