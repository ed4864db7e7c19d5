use alloc::vec::Vec;

use super::{Rng, Scalar, Tensor};

/// `(fan_in, fan_out)` of a weight shape: `[out, in, k, k]` for
/// convolutions, `[out, in]` for dense maps.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [out, inp, rest @ ..] => {
            let field: usize = rest.iter().product();
            (inp * field, out * field)
        }
    }
}

/// Glorot/Xavier uniform values in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_values<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Vec<T> {
    let (fi, fo) = fans(shape);
    let bound = libm::sqrt(6.0 / (fi + fo) as f64);
    let n: usize = shape.iter().product();
    (0..n).map(|_| T::from_f64(rng.uniform(-bound, bound))).collect()
}

/// Xavier-initialized constant tensor; deterministic per `(seed, stream)`.
pub fn xavier_init<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    Tensor::new(shape, xavier_values(shape, rng)).expect("length matches shape")
}
