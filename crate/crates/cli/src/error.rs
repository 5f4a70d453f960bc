use std::path::Path;

use shroomgen_core::annotate::AnnotateError;
use shroomgen_core::eval::EvalError;
use shroomgen_core::render::RenderError;
use shroomgen_core::scene::SceneError;
use shroomgen_genclient::GenError;

/// Errors grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, arguments or input contents.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    /// The generation service failed one or more jobs.
    #[error("{0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io(_) => 2,
            Self::Remote(_) => 3,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Self::Io(e.to_string())
        } else {
            Self::Validation(e.to_string())
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io(e) => Self::Io(e.to_string()),
            RenderError::Image(image_err) => Self::Io(image_err.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<AnnotateError> for CliError {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::Io(e) => Self::Io(e.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(e) => Self::Io(e.to_string()),
            e => Self::Validation(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Io(e) => Self::Io(e.to_string()),
            GenError::Http(m) => Self::Remote(m),
            e => Self::Validation(e.to_string()),
        }
    }
}
