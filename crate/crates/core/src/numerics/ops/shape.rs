use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::numerics::tensor::{numel, Backward};
use crate::numerics::{Scalar, Tensor};

struct Reshape;

impl<T: Scalar> Backward<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, _inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.to_vec())]
    }
}

pub fn reshape<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if numel(shape) != x.numel() {
        return Err(shape_err("reshape", x.shape(), shape));
    }
    Ok(Tensor::from_op(shape.to_vec(), x.to_vec(), &[x], Reshape))
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` (with `shape`) into the axis order `axes`.
fn permute_data<T: Scalar>(src: &[T], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<T>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = contiguous_strides(shape);
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(src.len());
    let nd = out_shape.len();
    if src.is_empty() {
        return (out_shape, out);
    }
    if nd == 0 {
        return (out_shape, src.to_vec());
    }
    let mut idx = vec![0usize; nd];
    let mut off = 0usize;
    let inner = out_shape[nd - 1];
    let is = strides[nd - 1];
    loop {
        for j in 0..inner {
            out.push(src[off + j * is]);
        }
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return (out_shape, out);
            }
            d -= 1;
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

struct Permute {
    inverse: Vec<usize>,
    out_shape: Vec<usize>,
}

impl<T: Scalar> Backward<T> for Permute {
    fn name(&self) -> &'static str {
        "permute"
    }
    fn backward(&self, _inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(permute_data(g, &self.out_shape, &self.inverse).1)]
    }
}

/// Reorders axes: output axis `i` is input axis `axes[i]`.
pub fn permute<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    let nd = x.rank();
    let mut seen = vec![false; nd];
    if axes.len() != nd || axes.iter().any(|&a| a >= nd || core::mem::replace(&mut seen[a], true)) {
        return Err(invalid(alloc::format!("permute {axes:?} is not a permutation of rank {nd}")));
    }
    let (out_shape, data) = permute_data(x.data(), x.shape(), axes);
    let mut inverse = vec![0; nd];
    for (i, &a) in axes.iter().enumerate() {
        inverse[a] = i;
    }
    Ok(Tensor::from_op(out_shape.clone(), data, &[x], Permute { inverse, out_shape }))
}

struct Concat {
    axis_sizes: Vec<usize>,
    outer: usize,
    inner: usize,
}

impl<T: Scalar> Backward<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn backward(&self, _inputs: &[Tensor<T>], _out: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let total: usize = self.axis_sizes.iter().sum();
        let mut start = 0;
        let mut grads = Vec::with_capacity(self.axis_sizes.len());
        for (k, &sz) in self.axis_sizes.iter().enumerate() {
            if needs[k] {
                let mut gi = Vec::with_capacity(self.outer * sz * self.inner);
                for o in 0..self.outer {
                    let base = (o * total + start) * self.inner;
                    gi.extend_from_slice(&g[base..base + sz * self.inner]);
                }
                grads.push(Some(gi));
            } else {
                grads.push(None);
            }
            start += sz;
        }
        grads
    }
}

/// Joins tensors along `axis`; all other extents must agree.
pub fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| invalid("concat of zero tensors"))?;
    let nd = first.rank();
    if axis >= nd {
        return Err(invalid(alloc::format!("concat axis {axis} out of range for rank {nd}")));
    }
    for p in parts {
        let ok = p.rank() == nd && (0..nd).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
        if !ok {
            return Err(shape_err("concat", first.shape(), p.shape()));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let axis_sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let total: usize = axis_sizes.iter().sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (p, &sz) in parts.iter().zip(&axis_sizes) {
            let base = o * sz * inner;
            data.extend_from_slice(&p.data()[base..base + sz * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_op(shape, data, parts, Concat { axis_sizes, outer, inner }))
}

fn check_nchw<T: Scalar>(op: &str, x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(invalid(alloc::format!("{op} expects [N, C, H, W], got {:?}", x.shape()))),
    }
}

struct Upsample2x {
    h: usize,
    w: usize,
}

impl<T: Scalar> Backward<T> for Upsample2x {
    fn name(&self) -> &'static str {
        "upsample_nearest2x"
    }
    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (h, w) = (self.h, self.w);
        let planes = inputs[0].numel() / (h * w);
        let mut gx = vec![T::ZERO; inputs[0].numel()];
        for p in 0..planes {
            let src = &g[p * 4 * h * w..(p + 1) * 4 * h * w];
            let dst = &mut gx[p * h * w..(p + 1) * h * w];
            for y in 0..2 * h {
                for x in 0..2 * w {
                    dst[(y / 2) * w + x / 2] += src[y * 2 * w + x];
                }
            }
        }
        vec![Some(gx)]
    }
}

/// Nearest-neighbour 2x spatial replication of an NCHW tensor.
pub fn upsample_nearest2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = check_nchw("upsample", x)?;
    let mut data = Vec::with_capacity(x.numel() * 4);
    for p in 0..n * c {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        for y in 0..2 * h {
            let row = &plane[(y / 2) * w..(y / 2 + 1) * w];
            for &v in row {
                data.push(v);
                data.push(v);
            }
        }
    }
    Ok(Tensor::from_op(vec![n, c, 2 * h, 2 * w], data, &[x], Upsample2x { h, w }))
}

struct AvgPool2x {
    h: usize,
    w: usize,
}

impl<T: Scalar> Backward<T> for AvgPool2x {
    fn name(&self) -> &'static str {
        "avg_pool2x"
    }
    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (h, w) = (self.h, self.w);
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::from_f64(0.25);
        let mut gx = vec![T::ZERO; inputs[0].numel()];
        let planes = gx.len() / (h * w);
        for p in 0..planes {
            for y in 0..h {
                for x in 0..w {
                    gx[p * h * w + y * w + x] = g[p * oh * ow + (y / 2) * ow + x / 2] * quarter;
                }
            }
        }
        vec![Some(gx)]
    }
}

/// 2x2 box-filter downsample of an NCHW tensor with even extents.
pub fn avg_pool2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = check_nchw("avg_pool2x", x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(invalid(alloc::format!("avg_pool2x needs even extents, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let src = x.data();
    let mut data = Vec::with_capacity(n * c * oh * ow);
    for p in 0..n * c {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let s = plane[2 * y * w + 2 * xx]
                    + plane[2 * y * w + 2 * xx + 1]
                    + plane[(2 * y + 1) * w + 2 * xx]
                    + plane[(2 * y + 1) * w + 2 * xx + 1];
                data.push(s * quarter);
            }
        }
    }
    Ok(Tensor::from_op(vec![n, c, oh, ow], data, &[x], AvgPool2x { h, w }))
}
