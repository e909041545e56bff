//! Crate-wide error type.

use std::path::PathBuf;

use crate::spectral::Band;

/// Everything that can go wrong inside the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec failure: {0}")]
    Codec(#[from] image::ImageError),

    #[error("bad raw image file {path}: {reason}")]
    BadRawFile { path: PathBuf, reason: String },

    #[error("unsupported image format for {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("payload capacity exceeded: {requested} coded bits > d/16 = {available} for a {d}-dimensional image")]
    CapacityExceeded {
        requested: usize,
        available: usize,
        d: usize,
    },

    #[error("band {band:?} carries no energy in the unedited watermark residuals; retention ratio undefined")]
    DegenerateBand { band: Band },

    #[error("fidelity floor of {floor_db} dB is infeasible: implied embedding strength underflows")]
    InfeasibleFloor { floor_db: f64 },

    #[error("bad payload encoding: {0}")]
    BadPayload(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
