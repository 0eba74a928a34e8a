use thiserror::Error;

/// Errors raised anywhere in an audit. Every variant carries the module it
/// originated from so that CLI messages can point at the failing stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] input error: {message}")]
    Input {
        module: &'static str,
        message: String,
    },
    #[error("[{module}] numerical failure: {message}")]
    Numerical {
        module: &'static str,
        message: String,
    },
    #[error("[io] {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("[json] {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn input(module: &'static str, message: impl Into<String>) -> Self {
        Error::Input {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn numerical(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical {
            module,
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 for input/config problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } => 3,
            _ => 2,
        }
    }

    pub fn is_input(&self) -> bool {
        !matches!(self, Error::Numerical { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
