use alloc::boxed::Box;
use alloc::string::String;

use crate::qp::{QpProblem, QpStatus};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or data that cannot be used as configured.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The QP behind a controller did not reach an optimal solution. The
    /// problem is attached so callers can dump it for offline diagnosis.
    #[error("QP solve ended with status {status} after {iterations} iterations")]
    Solver {
        status: QpStatus,
        iterations: usize,
        problem: Box<QpProblem>,
    },
}

impl Error {
    /// Short category label, used for process exit codes and log lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension(_) => "dimension",
            Error::Numerical(_) => "numerical",
            Error::Solver { .. } => "solver",
        }
    }
}
