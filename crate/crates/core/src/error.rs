use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("direction {0:?} is not in the rational catalog; use direct cube estimation instead")]
    OffCatalog(Vec<f64>),

    #[error("grids are incompatible: {0}")]
    IncompatibleGrids(String),

    #[error("non-finite energy or gradient at iteration {iteration} (energy = {energy})")]
    NonFinite { iteration: usize, energy: f64 },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
