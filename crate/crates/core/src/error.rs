use std::path::PathBuf;

/// Errors raised across the crate.
///
/// The variants map onto the failure classes the CLI distinguishes by exit code:
/// configuration/usage problems, numerical divergence, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    /// A loss, gradient, or parameter became non-finite.
    #[error("numerical divergence: {0}")]
    Numerical(String),

    #[error("parse error in {}: line {line}: {message}", display_path(.path))]
    Parse {
        path: Option<PathBuf>,
        line: u64,
        message: String,
    },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn display_path(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => p.display().to_string(),
        None => "<input>".to_owned(),
    }
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
