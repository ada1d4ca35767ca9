use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible.
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// Input outside the operation's domain (too few points, label out of range, ...).
    Domain(String),
    /// Invalid scalar parameter (temperature, step size, ...).
    Parameter(String),
    /// Tape misuse, e.g. a second backward pass without a reset.
    State(String),
    /// Inconsistent training or model configuration.
    Config(String),
    /// Triplet sampling impossible for the given batch.
    Sampling(String),
    /// A loss term evaluated to NaN or infinity.
    NonFinite { term: String, epoch: usize, value: f64 },
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => write!(
                f,
                "dimension mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::State(msg) => write!(f, "tape state error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Sampling(msg) => write!(f, "sampling error: {msg}"),
            Error::NonFinite { term, epoch, value } => {
                write!(f, "loss term `{term}` became {value} in epoch {epoch}")
            }
        }
    }
}

impl core::error::Error for Error {}
