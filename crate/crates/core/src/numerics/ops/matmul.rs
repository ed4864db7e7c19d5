use alloc::vec;
use alloc::vec::Vec;

use super::elementwise::{broadcast_shape, broadcast_strides, broadcast_walk};
use crate::error::{shape_err, Result};
use crate::numerics::scalar::{gemm, MatRef};
use crate::numerics::tensor::{numel, Backward};
use crate::numerics::{Scalar, Tensor};

struct Matmul {
    batch: Vec<usize>,
    m: usize,
    k: usize,
    n: usize,
}

impl Matmul {
    fn walk(&self, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>, mut f: impl FnMut(usize, usize, usize)) {
        let ab = &a.shape()[..a.rank() - 2];
        let bb = &b.shape()[..b.rank() - 2];
        let sa = broadcast_strides(ab, &self.batch);
        let sb = broadcast_strides(bb, &self.batch);
        if self.batch.is_empty() {
            f(0, 0, 0);
        } else {
            broadcast_walk(&self.batch, &sa, &sb, f);
        }
    }
}

impl<T: Scalar> Backward<T> for Matmul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        let (m, k, n) = (self.m, self.k, self.n);
        let mut ga = needs[0].then(|| vec![T::ZERO; a.numel()]);
        let mut gb = needs[1].then(|| vec![T::ZERO; b.numel()]);
        self.walk(a, b, |o, ia, ib| {
            let gm = MatRef::row_major(&g[o * m * n..(o + 1) * m * n], m, n);
            let am = MatRef::row_major(&a.data()[ia * m * k..(ia + 1) * m * k], m, k);
            let bm = MatRef::row_major(&b.data()[ib * k * n..(ib + 1) * k * n], k, n);
            if let Some(ga) = ga.as_mut() {
                gemm(gm, bm.t(), T::ONE, &mut ga[ia * m * k..(ia + 1) * m * k]);
            }
            if let Some(gb) = gb.as_mut() {
                gemm(am.t(), gm, T::ONE, &mut gb[ib * k * n..(ib + 1) * k * n]);
            }
        });
        vec![ga, gb]
    }
}

/// Batched matrix product `[..., M, K] x [..., K, N] -> [..., M, N]` with
/// broadcasting over the leading batch axes.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(shape_err("matmul", a.shape(), b.shape()));
    }
    let (m, k) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
    let (k2, n) = (b.shape()[b.rank() - 2], b.shape()[b.rank() - 1]);
    if k != k2 {
        return Err(shape_err("matmul", a.shape(), b.shape()));
    }
    let batch = broadcast_shape(&a.shape()[..a.rank() - 2], &b.shape()[..b.rank() - 2])
        .ok_or_else(|| shape_err("matmul", a.shape(), b.shape()))?;
    let op = Matmul { batch, m, k, n };
    let mut data = vec![T::ZERO; numel(&op.batch) * m * n];
    op.walk(a, b, |o, ia, ib| {
        let am = MatRef::row_major(&a.data()[ia * m * k..(ia + 1) * m * k], m, k);
        let bm = MatRef::row_major(&b.data()[ib * k * n..(ib + 1) * k * n], k, n);
        gemm(am, bm, T::ZERO, &mut data[o * m * n..(o + 1) * m * n]);
    });
    let mut shape = op.batch.clone();
    shape.extend_from_slice(&[m, n]);
    Ok(Tensor::from_op(shape, data, &[a, b], op))
}
