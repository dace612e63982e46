use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants map onto the exit-code classes used by the CLI: `Input`,
/// `Config`, `Parameter`, `Unsupported` and `Json` are configuration problems,
/// the rest are runtime failures.
#[derive(Debug, Error)]
pub enum FcviError {
    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numerical failure at iteration {iteration}: {detail}")]
    Numerical { iteration: usize, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rate fit error: {0}")]
    Fit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error{}: {source}", .path.as_ref().map(|p| format!(" in {p}")).unwrap_or_default())]
    Json {
        path: Option<String>,
        #[source]
        source: serde_json::Error,
    },
}

impl FcviError {
    /// True for errors caused by bad user-supplied configuration or data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            FcviError::Input(_)
                | FcviError::Config(_)
                | FcviError::Parameter(_)
                | FcviError::Unsupported(_)
                | FcviError::Json { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        FcviError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FcviError>;
