use std::io;

use crate::config::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty prompt: history window has no entries")]
    EmptyPrompt,

    #[error("forecast unavailable: {cause}")]
    ForecastUnavailable { cause: String },

    #[error("episode aborted at round {round}: {source}")]
    EpisodeAborted {
        round: usize,
        /// Rounds completed before the failure.
        partial: Box<Vec<crate::engine::RoundRecord>>,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate test: {0}")]
    DegenerateTest(DegenerateReason),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateReason {
    /// Every paired difference is exactly zero.
    AllDifferencesZero,
    /// Differences are constant but nonzero, so their variance vanishes.
    ZeroVarianceNonzeroOffset,
}

impl std::fmt::Display for DegenerateReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DegenerateReason::AllDifferencesZero => f.write_str("all differences zero"),
            DegenerateReason::ZeroVarianceNonzeroOffset => {
                f.write_str("zero variance, nonzero offset")
            }
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
