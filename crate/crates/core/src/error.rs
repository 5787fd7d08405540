use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh is not watertight: edge ({0}, {1}) is used by {2} triangle(s)")]
    NonWatertightMesh(usize, usize, usize),
    #[error("mesh winding is inconsistent at directed edge ({0}, {1})")]
    InconsistentWinding(usize, usize),
    #[error("mesh encloses non-positive signed volume {0} m^3 (inverted winding?)")]
    NonPositiveVolume(f64),
    #[error("triangle {0} references vertex {1}, but the mesh has {2} vertices")]
    VertexIndexOutOfRange(usize, usize, usize),
    #[error("triangle {index} is degenerate (area {area:e} m^2)")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("volume {volume} is outside [0, {capacity}]")]
    VolumeOutOfRange { volume: f64, capacity: f64 },
    #[error("pixel ({0}, {1}) is outside the image")]
    PixelOutOfBounds(f64, f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("expected-label cache does not match the observation's view")]
    CacheMismatch,
    #[error("belief collapsed: every posterior bin underflowed to zero")]
    DegenerateBelief,
    #[error("no training data")]
    EmptyTrainingSet,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("angle {0} rad is outside [0, pi]")]
    AngleOutOfRange(f64),
    #[error("invalid probability table: {0}")]
    InvalidTable(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad user input (configs, files, arguments)
    /// rather than failures during a run.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Format { .. }
                | Error::InvalidConfig(_)
                | Error::InvalidTable(_)
                | Error::InvalidHistogram(_)
                | Error::InvalidCamera(_)
                | Error::EmptyTrainingSet
                | Error::InsufficientData(_)
                | Error::NonWatertightMesh(..)
                | Error::InconsistentWinding(..)
                | Error::NonPositiveVolume(_)
                | Error::VertexIndexOutOfRange(..)
                | Error::DegenerateTriangle { .. }
                | Error::VolumeOutOfRange { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
