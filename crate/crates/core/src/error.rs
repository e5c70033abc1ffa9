use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("selected triple (user {user}, access {access}, target {target}) has no finite latency")]
    UnreachableSelection {
        user: usize,
        access: usize,
        target: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no Zipf exponent in [0, 10] places mass {target} on the head (reachable range {lo}..{hi})")]
    PopularityFit { target: f64, lo: f64, hi: f64 },

    #[error("conjugate gradient stopped after {iterations} iterations at relative residual {residual:e}")]
    PcgNotConverged { iterations: usize, residual: f64 },

    #[error("ADMM diverged at iteration {iteration}: residual {residual:e} against an earlier window peak of {previous:e}")]
    Diverged {
        iteration: usize,
        residual: f64,
        previous: f64,
        /// Diagnostics up to and including the failing iteration.
        trace: Vec<crate::admm::IterationRecord>,
    },

    #[error("instance exceeds exact-oracle limits: {0}")]
    OracleLimits(String),

    #[error("solver {solver} produced an infeasible solution: {detail}")]
    Infeasible { solver: String, detail: String },

    #[error("scenario format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
