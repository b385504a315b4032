use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("not a density operator: {0}")]
    NotDensity(String),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("unknown parameter index {0}")]
    UnknownParameter(usize),
    #[error("unknown input symbol: {0}")]
    UnknownSymbol(String),
    #[error("no pair of parameters shares the innocent output state")]
    NoZeroEquivalentPair,
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("type ball is empty or has zero mass")]
    EmptyTypeBall,
    #[error("scale exceeded: {0}")]
    ScaleExceeded(String),
    #[error("average non-innocent weight is zero")]
    DegenerateAlpha,
    #[error("states are not simultaneously diagonal: {0}")]
    NotClassical(String),
    #[error("unitary is a multiple of the identity")]
    IdentityUnitary,
    #[error("no block length up to {0} orthogonalizes the unitary")]
    MNotFound(usize),
    #[error("block length {m} exceeds the number of channel uses {n}")]
    BlockTooLong { m: usize, n: usize },
    #[error("precondition could not be verified: {0}")]
    PreconditionUnverifiable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
