use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },

    #[error("trajectory too short: {len} samples, need at least {need}")]
    TrajectoryTooShort { len: usize, need: usize },

    #[error("split produced an empty partition ({train} train / {val} val)")]
    EmptySplit { train: usize, val: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("zero-torque normalizer is zero for rollout step {step}, joint {joint}")]
    ZeroNormalizer { step: usize, joint: usize },

    #[error("horizon of {horizon} steps exceeds available data ({available} steps)")]
    HorizonExceedsData { horizon: usize, available: usize },

    #[error("episode is done; call reset before stepping again")]
    EpisodeDone,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format version: expected {expected}, found {found}")]
    Version { expected: u32, found: String },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { what, expected, got })
    }
}
