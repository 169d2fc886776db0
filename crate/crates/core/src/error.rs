use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::attribution::CityKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("failed to read input stream: {0}")]
    Read(#[source] io::Error),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("degenerate corpus: pooled top-paper proportion is {0}")]
    DegenerateCorpus(f64),

    #[error("city equals corpus: all {0} papers are attributed to one city")]
    CityEqualsCorpus(u64),

    #[error("invalid z-test input: {0}")]
    InvalidTestInput(String),

    #[error("non-finite z value")]
    NonFiniteZ,

    #[error("occurrence refers to unknown paper id {0}")]
    DanglingPaper(String),

    #[error("gazetteer {path}: duplicate key {key}")]
    DuplicateKey { path: String, key: CityKey },

    #[error("gazetteer {path}, line {line}: {message}")]
    GazetteerRow {
        path: String,
        line: u64,
        message: String,
    },

    #[error("statistics dump, line {line}: {message}")]
    StatsDump { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no coordinates for {}", format_keys(.0))]
    MissingCoordinates(Vec<CityKey>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingCoordinates(_) => 3,
            _ => 1,
        }
    }
}

fn format_keys(keys: &[CityKey]) -> String {
    keys.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
