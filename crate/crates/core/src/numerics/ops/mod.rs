//! Differentiable tensor operations.
mod activation;
mod conv;
mod elementwise;
mod matmul;
mod reduce;
mod shape;

pub use activation::{dropout, exp_activation, leaky_relu, softmax, EXP_CLAMP, LEAKY_SLOPE};
pub use conv::{conv2d, upsample_conv};
pub use elementwise::{abs, add, add_scalar, log1p, mul, scale, square, sub};
pub use matmul::matmul;
pub use reduce::{l1, mean, smooth_l1, sum};
pub use shape::{avg_pool2x, concat, permute, reshape, upsample_nearest2x};
