//! Config-driven experiment harness around the `iocnn` toolkit.

pub mod config;
pub mod experiments;
pub mod svg;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] iocnn::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::Context {
            context: what(),
            source: Box::new(e.into()),
        })
    }
}
