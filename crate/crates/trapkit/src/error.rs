use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unreadable root {root}: {source}")]
    UnreadableRoot {
        root: PathBuf,
        source: std::io::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("non-finite value in column {column}")]
    NonFinite { column: String },

    #[error("not enough rows: need {need}, got {got}")]
    NotEnoughRows { need: usize, got: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("rename collision: {0} already exists")]
    RenameCollision(PathBuf),

    #[error("parse error in {path} at {context}: {reason}")]
    Parse {
        path: PathBuf,
        context: String,
        reason: String,
    },

    #[error("watch registration failed for {directory}: {reason}")]
    WatchRegistration { directory: PathBuf, reason: String },

    #[error("monitor not running")]
    MonitorNotRunning,

    #[error("refusing to attack {0}: not a marked corpus root")]
    UnsafeAttackRoot(PathBuf),

    #[error("clock misuse: alert observed before attack start")]
    NegativeDelay,

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
