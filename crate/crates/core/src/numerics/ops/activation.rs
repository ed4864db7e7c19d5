use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::tensor::Backward;
use crate::numerics::{Rng, Scalar, Tensor};

/// Default negative slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Pre-activation window of [`exp_activation`].
pub const EXP_CLAMP: (f64, f64) = (-30.0, 20.0);

struct LeakyRelu<T> {
    slope: T,
}

impl<T: Scalar> Backward<T> for LeakyRelu<T> {
    fn name(&self) -> &'static str {
        "leaky_relu"
    }
    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let x = inputs[0].data();
        let gx = g
            .iter()
            .zip(x)
            .map(|(&gi, &xi)| if xi >= T::ZERO { gi } else { gi * self.slope })
            .collect();
        vec![Some(gx)]
    }
}

/// `x` for `x >= 0`, `slope * x` otherwise; subgradient 1 at 0.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v >= T::ZERO { v } else { v * slope })
        .collect();
    Tensor::from_op(x.shape().to_vec(), data, &[x], LeakyRelu { slope })
}

struct ExpActivation;

impl<T: Scalar> Backward<T> for ExpActivation {
    fn name(&self) -> &'static str {
        "exp_activation"
    }
    fn backward(&self, inputs: &[Tensor<T>], out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (lo, hi) = (T::from_f64(EXP_CLAMP.0), T::from_f64(EXP_CLAMP.1));
        let x = inputs[0].data();
        let gx = g
            .iter()
            .zip(x)
            .zip(out)
            .map(|((&gi, &xi), &yi)| if xi < lo || xi > hi { T::ZERO } else { gi * yi })
            .collect();
        vec![Some(gx)]
    }
}

/// `exp(clamp(x, -30, 20))`: strictly positive and finite for HDR outputs.
pub fn exp_activation<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (lo, hi) = (T::from_f64(EXP_CLAMP.0), T::from_f64(EXP_CLAMP.1));
    let data = x.data().iter().map(|&v| v.max(lo).min(hi).exp()).collect();
    Tensor::from_op(x.shape().to_vec(), data, &[x], ExpActivation)
}

struct Softmax {
    outer: usize,
    len: usize,
    inner: usize,
}

impl<T: Scalar> Backward<T> for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }
    fn backward(&self, _inputs: &[Tensor<T>], y: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut gx = vec![T::ZERO; y.len()];
        for o in 0..self.outer {
            for i in 0..self.inner {
                let base = o * self.len * self.inner + i;
                let mut dot = T::ZERO;
                for j in 0..self.len {
                    let k = base + j * self.inner;
                    dot += g[k] * y[k];
                }
                for j in 0..self.len {
                    let k = base + j * self.inner;
                    gx[k] = y[k] * (g[k] - dot);
                }
            }
        }
        vec![Some(gx)]
    }
}

/// Normalized exponentials along `axis` (max-subtracted).
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(invalid(alloc::format!("softmax axis {axis} out of range for {shape:?}")));
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let xd = x.data();
    let mut y = vec![T::ZERO; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut m = xd[base];
            for j in 1..len {
                m = m.max(xd[base + j * inner]);
            }
            let mut s = T::ZERO;
            for j in 0..len {
                let k = base + j * inner;
                let e = (xd[k] - m).exp();
                y[k] = e;
                s += e;
            }
            let inv = T::ONE / s;
            for j in 0..len {
                y[base + j * inner] *= inv;
            }
        }
    }
    Ok(Tensor::from_op(shape.to_vec(), y, &[x], Softmax { outer, len, inner }))
}

struct Dropout<T> {
    mask: Vec<T>,
}

impl<T: Scalar> Backward<T> for Dropout<T> {
    fn name(&self) -> &'static str {
        "dropout"
    }
    fn backward(&self, _inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.iter().zip(&self.mask).map(|(&a, &m)| a * m).collect())]
    }
}

/// Inverted dropout: in training, zero each element with probability
/// `rate` and scale survivors by `1 / (1 - rate)`. Identity otherwise.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, rng: &mut Rng, training: bool) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid(alloc::format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.numel())
        .map(|_| if rng.next_f64() < rate { T::ZERO } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok(Tensor::from_op(x.shape().to_vec(), data, &[x], Dropout { mask }))
}
