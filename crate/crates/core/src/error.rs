use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    // stratification
    #[error("unit {0} appears in more than one stratum")]
    Overlap(usize),
    #[error("unit {0} is not covered by any stratum")]
    Coverage(usize),
    #[error("unit index {index} out of range for {n_units} units")]
    IndexOutOfRange { index: usize, n_units: usize },
    #[error("stratum {stratum} of size {size} cannot hold {treated} treated units")]
    DegenerateStratum { stratum: usize, size: usize, treated: usize },
    #[error("{len} units cannot be enumerated (limit {limit})")]
    TooLarge { len: usize, limit: usize },

    // sample
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("baseline column {0} does not exist")]
    BadBaselineColumn(usize),
    #[error("sample has no {0}")]
    Missing(&'static str),

    // linalg
    #[error("need at least {needed} rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is indefinite even after ridge {ridge}")]
    Indefinite { ridge: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("arm {arm} has {got} units, need at least {needed}")]
    TooFewUnits { arm: u8, got: usize, needed: usize },

    // matching
    #[error("{0} units cannot be paired")]
    OddLength(usize),
    #[error("{0} units cannot be split into sets of four")]
    NotDivisibleBy4(usize),
    #[error("treated fraction {treated}/{size} is not a reduced proper fraction")]
    BadFraction { treated: usize, size: usize },
    #[error("{len} units cannot be split into strata of size {k}")]
    BadLength { len: usize, k: usize },
    #[error("distance matrix is not a symmetric zero-diagonal matrix")]
    BadDistanceMatrix,
    #[error("subpopulation {label}: {message}")]
    Subpopulation { label: u32, message: String },

    // estimate
    #[error("treatment arm {0} is empty")]
    EmptyArm(u8),
    #[error("stratification is not a set of matched pairs")]
    NotPairs,
    #[error("stratification is not a set of balanced fours")]
    NotFours,
    #[error("stratum {stratum} has {got} treated units, expected {expected}")]
    TreatedCountMismatch { stratum: usize, expected: usize, got: usize },
    #[error("subpopulation {label} has an empty arm")]
    EmptyArmInSubpop { label: u32 },

    // sim
    #[error("method roster has no `none` baseline")]
    MissingNoneBaseline,
    #[error("invalid configuration: {0}")]
    Config(String),
}
