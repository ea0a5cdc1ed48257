use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("network is disconnected; components: {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },

    #[error("problem is infeasible; strongest certificate rows: {binding:?}")]
    Infeasible { binding: Vec<String> },

    #[error("problem is unbounded")]
    Unbounded,

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("no admissible binding pattern found ({candidates} candidates examined, {degenerate} degenerate)")]
    NoAdmissiblePattern { candidates: usize, degenerate: usize },

    #[error("enumeration guard exceeded: {0}")]
    Guard(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by bad input rather than solver trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Invalid(_)
                | Error::Disconnected { .. }
                | Error::Data(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Guard(_)
        )
    }
}
