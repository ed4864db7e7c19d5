//! Screen-space indirect illumination prediction.
//!
//! `ngi-core` holds everything that is pure computation: a small tensor
//! library with reverse-mode autodiff, a procedural box-room generator and
//! Lambertian path tracer that produce factorized HDR frames, the
//! geometry-conditioned monochromatic shading network, its losses, the
//! adversarial trainer and the evaluation metrics.
//!
//! The crate is `no_std` (with `alloc`) when built without the `std`
//! feature. File formats, the command line and everything else that touches
//! the operating system live in the companion `ngi` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// Index loops mirror the math in the kernels.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

extern crate alloc;

mod error;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod gradsuite;
pub mod objective;
pub mod scenegen;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Rng, Scalar, Tensor};
