use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {theta:?} outside the domain of model {model}")]
    Domain { model: String, theta: Vec<f64> },

    #[error("coefficients do not decay geometrically (ratio {ratio} >= 1)")]
    RateUnattainable { ratio: f64 },

    #[error("unsupported moment order {0} (only 1..=4 are tabulated)")]
    UnsupportedMoment(usize),

    #[error("{0} is unavailable for this innovation family")]
    Unavailable(&'static str),

    #[error("enumeration of {tuples} injective tuples exceeds the cap of {cap}")]
    EnumerationCap { tuples: f64, cap: u64 },

    #[error("order m = {m} is invalid for sample size n = {n}")]
    InvalidOrder { m: usize, n: usize },

    #[error("direct kernel evaluation refused for m = {0} > 8")]
    KernelTooLarge(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need {needed} pre-observations, path has {available}")]
    InsufficientPreObservations { needed: usize, available: usize },

    #[error("no invertible solution for autocorrelation {0}")]
    NoInvertibleRoot(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by numerical domain or boundary problems, as
    /// opposed to malformed input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::RateUnattainable { .. }
                | Error::Degenerate(_)
                | Error::NoInvertibleRoot(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
