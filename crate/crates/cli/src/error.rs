use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, with the path of the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("step `{step}` failed: {source}")]
    Step {
        step: String,
        #[source]
        source: ngd_core::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("output `{path}`: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
