use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tbdq_core::Error),
    #[error(transparent)]
    Metrics(#[from] tbdq_metrics::MetricsError),
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Metrics(_) => "metrics",
            CliError::Image { .. } => "image",
            CliError::Usage(_) => "usage",
        }
    }

    /// `error kind=<kind> <message>` on a single line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error kind={} {msg}", self.kind())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
