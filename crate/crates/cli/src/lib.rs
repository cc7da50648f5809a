//! Command-line front end and the live session server.

pub mod commands;
pub mod server;

use serde::Serialize;
use thiserror::Error;

use cardarena::compositor::CompositorError;
use cardarena::engine::EngineError;
use cardarena::model::ModelError;
use cardarena::session::SessionError;
use cardarena::trajectory::TrajectoryError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("validation failed with {0} violation(s)")]
    Invalid(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Compositor(#[from] CompositorError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::File { .. } => "missing_file",
            CliError::Invalid(_) => "invalid_data",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Engine(_) => "engine",
            CliError::Trajectory(_) => "trajectory",
            CliError::Model(_) => "model",
            CliError::Compositor(_) => "compositor",
            CliError::Session(_) => "session",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_line(&self) -> String {
        serde_json::to_string(&ErrorLine { error: self.kind(), message: self.to_string() }).expect("error line serializes")
    }
}
