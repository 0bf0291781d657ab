use std::path::Path;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Anything wrong with the request itself. Exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed after validation passed. Exit code 3.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: spin_core::Error,
    },

    #[error("{stage} failed: {path}: {message}")]
    Output {
        stage: &'static str,
        path: String,
        message: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } | CliError::Output { .. } => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub(crate) fn output(stage: &'static str, path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            stage,
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// Tags a core error with the stage it came from.
pub(crate) fn at(stage: &'static str) -> impl FnOnce(spin_core::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}

/// Config-time errors from core validation keep their field names.
pub(crate) fn invalid(section: &str) -> impl FnOnce(spin_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("[{section}] {e}"))
}

pub(crate) fn write_file(stage: &'static str, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(stage, dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::output(stage, path, e))
}
