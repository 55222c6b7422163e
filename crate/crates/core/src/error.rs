use thiserror::Error;

/// Errors raised by every module in the crate.
///
/// Validation errors cover bad inputs and configs; numerical errors cover
/// quadrature or evaluation failures on otherwise valid input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("densities have different representations: {0}")]
    MismatchedDensities(String),

    #[error("divergence order t = {0} must be finite and greater than -1")]
    InvalidOrder(f64),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{what} = {value} is out of range: {expected}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        expected: String,
    },

    #[error("box escapes the prior support: {0}")]
    BoxEscapesSupport(String),

    #[error("no feasible grid point: {0}")]
    EmptyGrid(String),

    #[error("prior density is not u-integrable: {0}")]
    NotIntegrable(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("oracle size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn out_of_range(what: &'static str, value: f64, expected: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            value,
            expected: expected.into(),
        }
    }

    /// Process exit code for the CLI: 1 validation, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Quadrature(_) | Error::BoundViolated(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
