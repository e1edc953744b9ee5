use std::path::PathBuf;

/// Errors produced by the signal-processing, simulation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {needed}")]
    Length { len: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("cannot mix at requested SER: {0}")]
    Mixing(String),

    #[error("cannot determine evaluation scenario: {0}")]
    Scenario(String),

    #[error("malformed feature file: {0}")]
    Format(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("scene {scene_id}: {source}")]
    InScene {
        scene_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a scene identifier to an error raised while processing that scene.
    pub fn in_scene(self, scene_id: impl Into<String>) -> Self {
        Error::InScene {
            scene_id: scene_id.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
