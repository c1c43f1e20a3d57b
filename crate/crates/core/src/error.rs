use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("transition matrix is not irreducible (stationary system is singular)")]
    NonIrreducible,

    #[error("quadrature did not reach tolerance {tol:e} on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64, tol: f64 },

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("moment matrix has rank below {rank} (sigma_J = {sigma:e})")]
    RankDeficient { rank: usize, sigma: f64 },

    #[error("projected moment matrix is near-singular (condition number {cond:e})")]
    NearSingularProjection { cond: f64 },

    #[error("no diagonalisable matrix found in search space (best separation {sep:e})")]
    NotDiagonalisable { sep: f64 },

    #[error("likelihood is flat in the transition parameters (curvature proxy {curvature:e})")]
    FlatLikelihood { curvature: f64 },

    #[error("label alignment is ambiguous (deciding gap {gap:e})")]
    AmbiguousAlignment { gap: f64 },

    #[error("every state has zero likelihood at position {position}")]
    DegenerateLikelihood { position: usize },

    #[error("index {index} is not inside a window of half-width {half_width} for length {len}")]
    IndexOutOfWindow {
        index: usize,
        half_width: usize,
        len: usize,
    },

    #[error("perturbed density is negative (min value {min:e})")]
    NotADensity { min: f64 },

    #[error("transition matrix is singular")]
    SingularQ,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used in failure columns of experiment reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::NonIrreducible => "NonIrreducible",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::TooFewObservations { .. } => "TooFewObservations",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NearSingularProjection { .. } => "NearSingularProjection",
            Error::NotDiagonalisable { .. } => "NotDiagonalisable",
            Error::FlatLikelihood { .. } => "FlatLikelihood",
            Error::AmbiguousAlignment { .. } => "AmbiguousAlignment",
            Error::DegenerateLikelihood { .. } => "DegenerateLikelihood",
            Error::IndexOutOfWindow { .. } => "IndexOutOfWindow",
            Error::NotADensity { .. } => "NotADensity",
            Error::SingularQ => "SingularQ",
            Error::Io { .. } => "Io",
            Error::Format { .. } => "Format",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
