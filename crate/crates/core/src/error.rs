use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands have incompatible shapes.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An argument is outside its valid domain.
    InvalidArgument(String),
    /// `backward` was called on a tensor with more than one element.
    NonScalarLoss(Vec<usize>),
    /// An optimizer step found no gradient for a parameter.
    MissingGradient(String),
    /// A loss term evaluated to NaN or infinity.
    NonFinite { term: &'static str, value: f64 },
    /// The camera basis could not be built (zero view direction or
    /// up vector parallel to it).
    DegenerateCamera,
    /// A dataset or frame collection was empty where data is required.
    EmptyDataset,
    /// A checkpoint does not contain what the model needs.
    Checkpoint(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonScalarLoss(shape) => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::MissingGradient(name) => write!(f, "parameter `{name}` has no gradient"),
            Error::NonFinite { term, value } => {
                write!(f, "loss term `{term}` is not finite ({value})")
            }
            Error::DegenerateCamera => write!(f, "degenerate camera basis"),
            Error::EmptyDataset => write!(f, "dataset is empty"),
            Error::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
