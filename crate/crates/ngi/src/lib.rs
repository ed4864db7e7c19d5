//! Files, datasets and commands for the `ngi-core` indirect illumination
//! pipeline: PFM images, JSON manifests and reports, binary checkpoints
//! and the `ngi` command line.
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod failure;
pub mod fsutil;
pub mod pfm;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{DataConfig, RunConfig};
pub use dataset::{Dataset, DatasetError, Manifest};
pub use failure::{Failure, FailureKind, ResultExt};
