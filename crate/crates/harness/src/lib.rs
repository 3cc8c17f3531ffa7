//! Closed-loop benchmark harness for the controllers in `deepc-core`.
//!
//! A run builds an identification dataset from the building model under
//! random excitation, constructs the selected controllers from it and drives
//! the plant in receding horizon with a perfect weather forecast. KPIs are
//! tracking RMSE, lag-1 autocorrelation of the input and solve times.

pub mod compare;
pub mod config;
pub mod io;
pub mod kpi;
pub mod scenario;
pub mod sim;

use std::path::{Path, PathBuf};

pub use compare::{compare_controllers, Comparison};
pub use config::ExperimentConfig;
pub use kpi::{compute_kpis, KpiRecord};
pub use scenario::Scenario;
pub use sim::{run_closed_loop, run_closed_loop_with, SimResult, StepContext, StepRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] deepc_core::Error),

    /// A controller failed during a closed-loop run.
    #[error("{controller} failed at step {step}: {source}")]
    Step {
        controller: String,
        step: usize,
        #[source]
        source: deepc_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl ToString) -> Self {
        HarnessError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Short label used in log lines and for the process exit code.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Core(e) | HarnessError::Step { source: e, .. } => e.category(),
            HarnessError::Io { .. } => "io",
            HarnessError::Format { .. } => "format",
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "dimension" => 3,
            "numerical" => 4,
            "solver" => 5,
            "io" => 6,
            _ => 7,
        }
    }

    /// The QP that failed, when the error carries one.
    pub fn problem(&self) -> Option<&deepc_core::qp::QpProblem> {
        match self {
            HarnessError::Core(deepc_core::Error::Solver { problem, .. })
            | HarnessError::Step {
                source: deepc_core::Error::Solver { problem, .. },
                ..
            } => Some(problem),
            _ => None,
        }
    }
}
