use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::numerics::tensor::Backward;
use crate::numerics::{Scalar, Tensor};

struct Sum<T> {
    scale: T,
}

impl<T: Scalar> Backward<T> for Sum<T> {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![g[0] * self.scale; inputs[0].numel()])]
    }
}

fn ordered_sum<T: Scalar>(v: &[T]) -> T {
    // Pairwise over fixed 1024-element blocks: accurate and independent of
    // any parallel split.
    let mut total = T::ZERO;
    for block in v.chunks(1024) {
        let mut s = T::ZERO;
        for &x in block {
            s += x;
        }
        total += s;
    }
    total
}

pub fn sum<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = ordered_sum(x.data());
    Tensor::from_op(Vec::new(), vec![s], &[x], Sum { scale: T::ONE })
}

pub fn mean<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = T::from_f64(x.numel().max(1) as f64);
    let s = ordered_sum(x.data()) / n;
    Tensor::from_op(Vec::new(), vec![s], &[x], Sum { scale: T::ONE / n })
}

struct PairLoss<T> {
    kind: PairKind,
    delta: T,
}

#[derive(Clone, Copy)]
enum PairKind {
    SmoothL1,
    L1,
}

impl<T: Scalar> Backward<T> for PairLoss<T> {
    fn name(&self) -> &'static str {
        match self.kind {
            PairKind::SmoothL1 => "smooth_l1",
            PairKind::L1 => "l1",
        }
    }
    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (p, t) = (inputs[0].data(), inputs[1].data());
        let scale = g[0] / T::from_f64(p.len().max(1) as f64);
        let d: Vec<T> = p
            .iter()
            .zip(t)
            .map(|(&a, &b)| {
                let e = a - b;
                let s = match self.kind {
                    PairKind::SmoothL1 if e.abs() < self.delta => e / self.delta,
                    _ => sign(e),
                };
                s * scale
            })
            .collect();
        let dt = needs[1].then(|| d.iter().map(|&v| -v).collect());
        vec![needs[0].then_some(d), dt]
    }
}

fn sign<T: Scalar>(e: T) -> T {
    if e > T::ZERO {
        T::ONE
    } else if e < T::ZERO {
        -T::ONE
    } else {
        T::ZERO
    }
}

fn pair_loss<T: Scalar>(
    kind: PairKind,
    op: &'static str,
    pred: &Tensor<T>,
    target: &Tensor<T>,
    delta: T,
) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(shape_err(op, pred.shape(), target.shape()));
    }
    let half = T::from_f64(0.5);
    let terms: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| {
            let e = (a - b).abs();
            match kind {
                PairKind::SmoothL1 if e < delta => half * e * e / delta,
                PairKind::SmoothL1 => e - half * delta,
                PairKind::L1 => e,
            }
        })
        .collect();
    let n = T::from_f64(terms.len().max(1) as f64);
    let value = ordered_sum(&terms) / n;
    Ok(Tensor::from_op(Vec::new(), vec![value], &[pred, target], PairLoss { kind, delta }))
}

/// Mean Huber-style loss: `0.5 e^2 / delta` below `delta`, `|e| - 0.5 delta` above.
pub fn smooth_l1<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, delta: T) -> Result<Tensor<T>> {
    if delta <= T::ZERO {
        return Err(invalid("smooth_l1 delta must be positive"));
    }
    pair_loss(PairKind::SmoothL1, "smooth_l1", pred, target, delta)
}

/// Mean absolute difference.
pub fn l1<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    pair_loss(PairKind::L1, "l1", pred, target, T::ONE)
}
