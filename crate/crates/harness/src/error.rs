use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] intsense_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("corpus {path}: {reason}")]
    Corpus { path: PathBuf, reason: String },

    #[error("train/test separation violated: {0}")]
    Hygiene(String),

    #[error("rank identity failed: rank(Q*) = {rank_q}, rank(P*) = {rank_p}")]
    RankIdentity { rank_q: usize, rank_p: usize },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| HarnessError::Io {
            path: path.into(),
            source,
        })
    }
}
