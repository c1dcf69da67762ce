//! Scenario runner on top of `tacsim-core`: JSON scene configs, robot
//! actuation schedules, tactile artifact output, batch execution and the
//! built-in demos.

// `!(x > 0.0)` also rejects NaN, which is the point of every such check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod demos;
pub mod environment;
pub mod run;

pub use config::{BatchSpec, SceneConfig};
pub use environment::Environment;
pub use run::{run_batch, run_environment, run_scenario, RunOptions, RunResult, StepRecord};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("solver failed at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: tacsim_core::Error,
    },
    #[error("acceptance check failed: {0}")]
    Assertion(String),
    #[error("{0}")]
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 2,
            AppError::Solver { .. } => 3,
            AppError::Assertion(_) => 4,
            AppError::Io(_) => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        AppError::Io(format!("{}: {e}", path.display()))
    }
}

pub type AppResult<T> = std::result::Result<T, AppError>;
