use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate view: {0}")]
    DegenerateView(String),

    #[error("sensor log has fewer than two frames")]
    EmptyLog,

    #[error("sensor log contains no GNSS fix, the global frame is undetermined")]
    NoGlobalAnchor,

    #[error("solver diverged: damping reached {damping:e} without an accepted step")]
    SolverDiverged { damping: f64 },

    #[error("triangulation needs at least two observations, got {0}")]
    TooFewObservations(usize),

    #[error("the point filter removed every point")]
    AllPointsFiltered,

    #[error("no support point falls inside the elevation grid")]
    NoSupport,

    #[error("({x:.3}, {y:.3}) lies outside the grid extent")]
    OutOfExtent { x: f64, y: f64 },

    #[error("unknown frame {0}")]
    UnknownFrame(u32),

    #[error("unknown camera {0:?}")]
    UnknownCamera(String),

    #[error("nothing to evaluate: no projected and no observed instances")]
    EmptyEvaluation,

    #[error("missing artifact {0:?}")]
    MissingArtifact(String),

    #[error("invalid config field {0:?}")]
    InvalidConfig(String),

    #[error("output directory {0:?} is locked by another process")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::DegenerateView(_) => "DegenerateView",
            Error::EmptyLog => "EmptyLog",
            Error::NoGlobalAnchor => "NoGlobalAnchor",
            Error::SolverDiverged { .. } => "SolverDiverged",
            Error::TooFewObservations(_) => "TooFewObservations",
            Error::AllPointsFiltered => "AllPointsFiltered",
            Error::NoSupport => "NoSupport",
            Error::OutOfExtent { .. } => "OutOfExtent",
            Error::UnknownFrame(_) => "UnknownFrame",
            Error::UnknownCamera(_) => "UnknownCamera",
            Error::EmptyEvaluation => "EmptyEvaluation",
            Error::MissingArtifact(_) => "MissingArtifact",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Locked(_) => "Locked",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
