//! Deterministic tensor algebra with reverse-mode automatic
//! differentiation.
mod adam;
mod gradcheck;
mod init;
pub mod ops;
mod par;
mod params;
mod rng;
mod scalar;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{faulty_identity, grad_check, grad_check_single, GradCheckConfig, GradCheckEntry, GradCheckReport};
pub use init::{fans, xavier_init, xavier_values};
pub(crate) use par::map_indexed;
pub use params::{Bound, Param, ParamStore};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
