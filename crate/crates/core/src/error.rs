use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    /// Velocity or position left the representable/physical range; usually
    /// a timestep too large for the stiffness in use.
    #[error("NumericBlowup: {0}")]
    NumericBlowup(String),

    #[error("DegenerateSegment: element {element} length {length:e} m is below 1e-12 m")]
    DegenerateSegment { element: usize, length: f64 },

    #[error("SceneInvalid: {0}")]
    SceneInvalid(String),

    #[error("EpisodeFinished: step called after the episode terminated")]
    EpisodeFinished,

    #[error("PlacementFailed: no valid placement for object {object} after {attempts} attempts")]
    PlacementFailed { object: usize, attempts: usize },

    #[error("Unreachable: waypoint {index} ({phase}) is {distance:.4} m from the mount, limit {limit:.4} m")]
    Unreachable {
        index: usize,
        phase: String,
        distance: f64,
        limit: f64,
    },

    #[error("SeriesTooShort: series has {len} values, window needs {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error("Format: {0}")]
    Format(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name, used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NumericBlowup(_) => "NumericBlowup",
            Error::DegenerateSegment { .. } => "DegenerateSegment",
            Error::SceneInvalid(_) => "SceneInvalid",
            Error::EpisodeFinished => "EpisodeFinished",
            Error::PlacementFailed { .. } => "PlacementFailed",
            Error::Unreachable { .. } => "Unreachable",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
