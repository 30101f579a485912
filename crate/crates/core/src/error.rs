use thiserror::Error;

/// Errors raised by the rate, bound and equalizer computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid input distribution: {0}")]
    InvalidDistribution(String),

    #[error("parameter out of domain: {0}")]
    DomainError(String),

    #[error("{what} did not converge (last estimate {estimate:e}, error {error:e})")]
    NonConvergent {
        what: &'static str,
        estimate: f64,
        error: f64,
    },

    #[error("polynomial root extraction failed: {0}")]
    RootFindingFailure(String),

    #[error("equalizer system is not positive definite")]
    SingularSystem,

    #[error("equalizer design did not converge: relative SNR gap {gap:e} at M = {half_len}")]
    NotConverged { gap: f64, half_len: usize },

    #[error("degenerate SNR: linear-equalizer SNR equals one")]
    DegenerateSnr,

    #[error("mixture has {components} components after pruning, budget is {budget}; use the Monte-Carlo estimator")]
    BudgetExceeded { components: u128, budget: u128 },

    #[error("summary lacks tap-domain third/fourth moments")]
    MissingMoments,

    #[error("invalid partition: {0}")]
    PartitionInvalid(String),

    #[error("normalization violated: {0}")]
    NormalizationViolated(String),

    #[error("root bracket failure: {0}")]
    RootBracketFailure(String),

    #[error("trellis has {states} states, budget is {budget}")]
    StateBudgetExceeded { states: usize, budget: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("error-event search inconclusive at max_len = {max_len}: {upper_bound} is only an upper bound")]
    Inconclusive { max_len: usize, upper_bound: f64 },

    #[error("SNR too low for the high-SNR bound: {0}")]
    SnrTooLow(String),

    #[error("no crossing in the supplied SNR grid")]
    NoCrossingInGrid,
}

pub type Result<T> = std::result::Result<T, Error>;
