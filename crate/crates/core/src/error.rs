use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. `key` is the dotted key path when known.
    #[error("configuration error{}: {msg}", key.as_ref().map(|k| format!(" at `{k}`")).unwrap_or_default())]
    Config { key: Option<String>, msg: String },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("I/O error{}: {source}", path.as_ref().map(|p| format!(" ({p})")).unwrap_or_default())]
    Io {
        path: Option<String>,
        #[source]
        source: io::Error,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{what} = {value} outside table range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{0}")]
    Missing(String),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: Some(key.into()),
            msg: msg.into(),
        }
    }

    pub fn config_msg(msg: impl Into<String>) -> Self {
        Error::Config {
            key: None,
            msg: msg.into(),
        }
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn io_at(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: Some(path.as_ref().display().to_string()),
            source,
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Config { .. } | Error::Range { .. } => 3,
            Error::Io { .. } | Error::Format { .. } | Error::Missing(_) => 4,
            Error::Invariant(_) | Error::UndefinedCorrelation(_) | Error::Domain(_) => 5,
        }
    }
}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io { path: None, source }
    }
}
