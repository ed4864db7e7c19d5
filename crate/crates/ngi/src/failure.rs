//! Error classes that map to process exit codes.
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    /// Invalid or inconsistent configuration or flags.
    Config,
    /// Missing, corrupt or mismatched input data.
    Data,
    /// Non-finite losses or failed gradient checks.
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Numerical => 4,
        }
    }
}

/// An error tagged with its class.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub source: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for Failure {}

pub trait ResultExt<T> {
    fn or_fail(self, kind: FailureKind) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn or_fail(self, kind: FailureKind) -> anyhow::Result<T> {
        self.map_err(|e| {
            anyhow::Error::new(Failure {
                kind,
                source: e.into(),
            })
        })
    }
}

/// Class of an arbitrary error: an explicit tag wins, then known error types.
pub fn classify(err: &anyhow::Error) -> Option<FailureKind> {
    use crate::{CheckpointError, DatasetError};
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return Some(f.kind);
        }
        if let Some(e) = cause.downcast_ref::<ngi_core::Error>() {
            return Some(match e {
                ngi_core::Error::NonFinite { .. } => FailureKind::Numerical,
                ngi_core::Error::EmptyDataset => FailureKind::Data,
                _ => FailureKind::Config,
            });
        }
        if cause.is::<DatasetError>() || cause.is::<CheckpointError>() || cause.is::<crate::pfm::PfmError>() {
            return Some(FailureKind::Data);
        }
        if cause.is::<serde_json::Error>() {
            return Some(FailureKind::Config);
        }
    }
    None
}
