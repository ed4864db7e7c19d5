//! Geometry-conditioned monochromatic shading generator with
//! geometry-aware attention, and its patch discriminator.
//!
//! Each RGB channel runs through the same generator weights as an
//! independent mono image. Geometry is encoded once per frame and its
//! features modulate every decoder level (scale and bias) and steer the
//! bottleneck attention, whose values come from the shading features.
mod config;
mod inputs;
mod model;
mod receptive;

pub use config::*;
pub use inputs::{normalized_geometry, stack_images};
pub use model::{GeometryFeatures, Mode, NetInputs, Network, Prediction};
pub use receptive::receptive_radius;
