use chrono::NaiveDate;
use thiserror::Error;

use crate::ingest::RowDiagnostic;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The benchmark proportion is 0 or 1, so the outcome has no spread and
    /// a nonzero error cannot be attributed to a correlation.
    #[error("degenerate benchmark {benchmark}: outcome variance is zero but total error is {total_error}")]
    DegenerateBenchmark { benchmark: f64, total_error: f64 },

    #[error("effective sample size {n_w} is not smaller than population size {population}")]
    SampleExceedsPopulation { n_w: f64, population: u64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid sensitivity factor {0}: factors must be positive and finite")]
    InvalidFactor(f64),

    #[error("cannot impute adult share on {date}: {reason}")]
    ImputationImpossible { date: NaiveDate, reason: String },

    #[error("query date {query} is before the first benchmark entry {first}")]
    OutOfRange { query: NaiveDate, first: NaiveDate },

    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),

    #[error("infeasible scenario{}: {reason}", lambda.map(|l| format!(" at lambda={l}")).unwrap_or_default())]
    InfeasibleScenario { lambda: Option<f64>, reason: String },

    #[error("degenerate response model: limiting response fraction {0} is numerically 0 or 1")]
    DegenerateResponse(f64),

    #[error(
        "normal tail underflow at z={0}: Phi(-|z|) is below the smallest normal f64; use |z| < 37"
    )]
    TailUnderflow(f64),

    #[error("invalid sampling stages: {0}")]
    InvalidStages(String),

    #[error("benchmark series invalid: {0}")]
    InvalidSeries(String),

    #[error("{path}: {} row(s) rejected; first: {}", diagnostics.len(), diagnostics.first().map(|d| d.to_string()).unwrap_or_default())]
    RejectedRows {
        path: String,
        diagnostics: Vec<RowDiagnostic>,
    },

    #[error("{0}: file contains no data rows")]
    EmptyFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors raised by a computation on otherwise valid inputs
    /// (degenerate benchmark, infeasible scenario, degenerate response model).
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBenchmark { .. }
                | Error::InfeasibleScenario { .. }
                | Error::DegenerateResponse(_)
                | Error::TailUnderflow(_)
                | Error::UndefinedCorrelation(_)
        )
    }
}
