use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix dimension must be at least 1")]
    ZeroDimension,

    #[error("phase {0} outside [0, pi]")]
    PhaseOutOfRange(f64),

    #[error("rejection sampler for {state} stalled after {rejections} consecutive rejections")]
    RejectionStalled { state: String, rejections: u64 },

    #[error("frequency cutoff {cutoff:.1} exceeds cap {cap}: efficiency {eta} too close to 1/2")]
    IllConditioned { eta: f64, cutoff: f64, cap: f64 },

    #[error("pattern ({j},{k}) has imaginary residue {residue:.3e} relative to its modulus")]
    ImaginaryResidue { j: usize, k: usize, residue: f64 },

    #[error("index ({j},{k}) outside table with N = {n}")]
    IndexOutOfRange { j: usize, k: usize, n: usize },

    #[error("no records")]
    EmptyRecords,

    #[error("efficiency mismatch: table built for eta = {table}, data declared eta = {data}")]
    EtaMismatch { table: f64, data: f64 },

    #[error("sample count {0} too small (need n >= 2)")]
    SampleCountTooSmall(usize),

    #[error("state is outside the class R(C={c}, B={b}, r={r})")]
    OutsideClass { c: f64, b: f64, r: f64 },

    #[error("reference matrix is zero")]
    ZeroTruth,

    #[error("fitted slope {slope:.4} <= -1/2: power law inversion diverges")]
    PowerLawDiverges { slope: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
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

    /// Short machine-readable category, used by the CLI and the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. }
            | Error::ZeroDimension
            | Error::PhaseOutOfRange(_)
            | Error::SampleCountTooSmall(_)
            | Error::IndexOutOfRange { .. }
            | Error::EtaMismatch { .. }
            | Error::ShapeMismatch(_)
            | Error::OutsideClass { .. }
            | Error::ZeroTruth
            | Error::EmptyRecords => "invalid_argument",
            Error::RejectionStalled { .. }
            | Error::IllConditioned { .. }
            | Error::ImaginaryResidue { .. }
            | Error::PowerLawDiverges { .. } => "numerical",
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => "parse",
            Error::Io { .. } => "io",
        }
    }
}
