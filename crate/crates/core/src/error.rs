//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,

    #[error("claims file, line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("claim {claim_id}: {message}")]
    InvalidClaim { claim_id: String, message: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("claim totals have zero mean; ratio planning is undefined")]
    ZeroMeanClaims,

    #[error("{name} must lie in {range}, got {value}")]
    InvalidRate {
        name: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("margin of error must be positive, got {0}")]
    InvalidMargin(f64),

    #[error("confidence must lie in (0.5, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("population of size {n_pop} is too small to plan a sample")]
    PopulationTooSmall { n_pop: usize },

    #[error("sample size {n} invalid for population of {n_pop} (need 2 <= n <= N)")]
    InvalidSampleSize { n: usize, n_pop: usize },

    #[error("identically zero polynomial has no defined roots")]
    ZeroPolynomial,

    #[error("exhaustive preference enumeration limited to {max} claims, population has {n}")]
    ExhaustiveTooLarge { n: usize, max: usize },

    #[error("enumeration oracle limited to {max} indicator bits, population needs {bits}")]
    OracleTooLarge { bits: usize, max: usize },

    #[error("replicate count must be positive")]
    NoReplicates,

    #[error(
        "claim {claim_id} has a line whose probable error differs from its claimed amount; \
         the all-or-nothing line formula requires them equal"
    )]
    AonLinesPrecondition { claim_id: String },

    #[error("requested {requested} strata but only {distinct} distinct claim totals exist")]
    StratumCount { requested: usize, distinct: usize },

    #[error("stratum count must be at least 1, got {0}")]
    InvalidStratumCount(usize),

    #[error("breakpoints must be strictly increasing and split off nonempty strata")]
    InvalidBreakpoints,

    #[error("total sample size {n_total} cannot satisfy per-stratum minimums ({needed} needed)")]
    AllocationTooSmall { n_total: usize, needed: usize },

    #[error("total sample size {n_total} exceeds population size {n_pop}")]
    AllocationTooLarge { n_total: usize, n_pop: usize },

    #[error("stratum {index}: sample size {n_h} invalid for stratum of {n_pop_h}")]
    InvalidStratumAllocation {
        index: usize,
        n_h: usize,
        n_pop_h: usize,
    },

    #[error("internal error: {0}")]
    Internal(String),
}
