use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("task {task} is unschedulable (response time exceeds deadline {deadline})")]
    Unschedulable { task: usize, deadline: u64 },

    #[error("task {task} misses the deadline of job {job}")]
    DeadlineMiss { task: usize, job: usize },

    #[error("hyper-period exceeds the configured bound of {bound} slots")]
    HyperPeriodOverflow { bound: u64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("Riccati iteration did not converge within {iterations} iterations (residual {residual:e})")]
    RiccatiDivergence { iterations: usize, residual: f64 },

    #[error("system is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("enumeration budget exceeded after {partial} schedules")]
    BudgetExceeded { partial: usize },

    #[error("no candidate schedule available in {0}")]
    EmptyCandidateSet(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that mean the task set cannot be deployed at all
    /// (as opposed to malformed input).
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Unschedulable { .. }
                | Error::DeadlineMiss { .. }
                | Error::NotStabilizable(_)
                | Error::RiccatiDivergence { .. }
        )
    }
}
