use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular matrix: pivot {pivot:e} at column {column} is below threshold {threshold:e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("negative time {0} is not allowed for a semigroup backend")]
    NegativeTime(f64),

    #[error("{a} - {b} is not invertible: {detail}")]
    NotInvertible { a: String, b: String, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("mixed backends: operator `{first}` is {first_family}, operator `{other}` is {other_family}")]
    MixedBackend {
        first: String,
        first_family: String,
        other: String,
        other_family: String,
    },

    #[error("operators `{a}` and `{b}` do not commute (defect {defect:e} > {tolerance:e})")]
    NonCommuting {
        a: String,
        b: String,
        defect: f64,
        tolerance: f64,
    },

    #[error("label `{0}` is bound to two different operators")]
    LabelConflict(String),

    #[error("singular confluent system: {detail}")]
    SingularSystem { detail: String },

    #[error("quadrature under-resolved at t = {t}: refinement changed the result by {observed:e} (tolerance {tolerance:e})")]
    QuadratureUnderResolved {
        t: f64,
        observed: f64,
        tolerance: f64,
    },

    #[error("characteristic polynomial has distinct roots {z1} and {z2}; use the generic solver")]
    NotDoubleRoot { z1: String, z2: String },

    #[error("{0} factors requested; at most 30 are supported")]
    TooManyFactors(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
