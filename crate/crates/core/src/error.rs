use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed or invalid line in a line-oriented input file.
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate episode_id `{0}`")]
    DuplicateEpisode(String),

    #[error("episode `{episode}`: {message}")]
    InvalidDocument { episode: String, message: String },

    #[error("episode `{episode}`, annotator `{annotator}`: {message}")]
    InvalidAnnotation {
        episode: String,
        annotator: String,
        message: String,
    },

    #[error("episode `{episode}`: score file {message}")]
    InvalidScores { episode: String, message: String },

    #[error("sequence of {len} tokens is shorter than 2k = {}; lower k", 2 * .k)]
    SequenceTooShort { len: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Chunk(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("augmentation refused: {0}")]
    Augment(String),

    #[error("split precondition failed: {0}")]
    Split(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn line(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Line {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
