use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("disk of radius {radius} at ({cx}, {cy}) does not fit in a {width}x{height} canvas")]
    DiskOutOfBounds {
        cx: f64,
        cy: f64,
        radius: f64,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("singular Jacobian (determinant {determinant:.3e}, condition number {condition:.3e})")]
    SingularJacobian { determinant: f64, condition: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("line is parallel to the plane z = {plane_z}; no unique intersection")]
    NoIntersection { plane_z: f64 },

    #[error("marker detection failed for {pose}")]
    DetectionFailed { pose: String },

    #[error("marker at ({x:.2}, {y:.2}) px is outside the {width}x{height} field of view")]
    MarkerOutsideFov {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("sample with zero variance cannot be used in an F-test")]
    ZeroVariance,

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
