use std::io;
use std::path::PathBuf;

use crate::ProjectId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Stream(#[from] io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("metric component {index} is {value}; components must be finite and non-negative")]
    NegativeMetric { index: usize, value: f64 },

    #[error("offset must be positive and finite, got {0}")]
    InvalidOffset(f64),

    #[error("cannot aggregate an empty metric vector")]
    EmptyVector,

    #[error(
        "membership stream is not sorted by commit id (commit {current} follows {previous} at record {record}); re-sort the input"
    )]
    UnsortedInput {
        previous: u64,
        current: u64,
        record: u64,
    },

    #[error(
        "ran out of disk space writing sort runs in {dir}: about {required} bytes of free space are needed"
    )]
    InsufficientDisk { dir: PathBuf, required: u64 },

    #[error("memory budget of {given} bytes is below the floor of {floor} bytes")]
    MemoryBudget { given: usize, floor: usize },

    #[error("no name known for project {0}")]
    MissingName(ProjectId),

    #[error("unknown project {0:?}")]
    UnknownProject(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
