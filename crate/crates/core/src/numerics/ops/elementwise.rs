use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::numerics::tensor::{numel, Backward};
use crate::numerics::{Scalar, Tensor};

/// Numpy-style broadcast of two shapes (aligned at the trailing axis).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd { a[i + a.len() - nd] } else { 1 };
        let db = if i + b.len() >= nd { b[i + b.len() - nd] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside `out` (zero on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let nd = out.len();
    let off = nd - shape.len();
    let mut strides = vec![0; nd];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + off] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output index with the matching offsets into both operands.
pub(crate) fn broadcast_walk(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let nd = out.len();
    if nd == 0 {
        f(0, 0, 0);
        return;
    }
    if numel(out) == 0 {
        return;
    }
    let inner = out[nd - 1];
    let (ia, ib) = (sa[nd - 1], sb[nd - 1]);
    let mut idx = vec![0usize; nd];
    let (mut oa, mut ob, mut o) = (0usize, 0usize, 0usize);
    loop {
        for j in 0..inner {
            f(o + j, oa + j * ia, ob + j * ib);
        }
        o += inner;
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
}

struct Binary {
    kind: BinKind,
    out_shape: Vec<usize>,
}

impl<T: Scalar> Backward<T> for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
        }
    }

    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        let same = a.shape() == b.shape();
        let mut ga = needs[0].then(|| vec![T::ZERO; a.numel()]);
        let mut gb = needs[1].then(|| vec![T::ZERO; b.numel()]);
        if same {
            for i in 0..g.len() {
                let (da, db) = partials(self.kind, a.data()[i], b.data()[i]);
                if let Some(ga) = ga.as_mut() {
                    ga[i] += g[i] * da;
                }
                if let Some(gb) = gb.as_mut() {
                    gb[i] += g[i] * db;
                }
            }
        } else {
            let sa = broadcast_strides(a.shape(), &self.out_shape);
            let sb = broadcast_strides(b.shape(), &self.out_shape);
            let (ad, bd) = (a.data(), b.data());
            broadcast_walk(&self.out_shape, &sa, &sb, |o, ia, ib| {
                let (da, db) = partials(self.kind, ad[ia], bd[ib]);
                if let Some(ga) = ga.as_mut() {
                    ga[ia] += g[o] * da;
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib] += g[o] * db;
                }
            });
        }
        vec![ga, gb]
    }
}

#[inline]
fn partials<T: Scalar>(kind: BinKind, a: T, b: T) -> (T, T) {
    match kind {
        BinKind::Add => (T::ONE, T::ONE),
        BinKind::Sub => (T::ONE, -T::ONE),
        BinKind::Mul => (b, a),
    }
}

#[inline]
fn apply<T: Scalar>(kind: BinKind, a: T, b: T) -> T {
    match kind {
        BinKind::Add => a + b,
        BinKind::Sub => a - b,
        BinKind::Mul => a * b,
    }
}

fn binary<T: Scalar>(kind: BinKind, op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| shape_err(op, a.shape(), b.shape()))?;
    let data = if a.shape() == b.shape() {
        a.data().iter().zip(b.data()).map(|(&x, &y)| apply(kind, x, y)).collect()
    } else {
        let mut data = vec![T::ZERO; numel(&out_shape)];
        let sa = broadcast_strides(a.shape(), &out_shape);
        let sb = broadcast_strides(b.shape(), &out_shape);
        let (ad, bd) = (a.data(), b.data());
        broadcast_walk(&out_shape, &sa, &sb, |o, ia, ib| data[o] = apply(kind, ad[ia], bd[ib]));
        data
    };
    Ok(Tensor::from_op(out_shape.clone(), data, &[a, b], Binary { kind, out_shape }))
}

/// Elementwise sum with broadcasting.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(BinKind::Add, "add", a, b)
}

/// Elementwise difference with broadcasting.
pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(BinKind::Sub, "sub", a, b)
}

/// Elementwise product with broadcasting.
pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(BinKind::Mul, "mul", a, b)
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind<T> {
    Scale(T),
    Offset,
    Square,
    Abs,
    Log1p,
}

struct Unary<T> {
    kind: UnaryKind<T>,
}

impl<T: Scalar> Backward<T> for Unary<T> {
    fn name(&self) -> &'static str {
        match self.kind {
            UnaryKind::Scale(_) => "scale",
            UnaryKind::Offset => "add_scalar",
            UnaryKind::Square => "square",
            UnaryKind::Abs => "abs",
            UnaryKind::Log1p => "log1p",
        }
    }

    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let x = inputs[0].data();
        let gx = match self.kind {
            UnaryKind::Scale(s) => g.iter().map(|&gi| gi * s).collect(),
            UnaryKind::Offset => g.to_vec(),
            UnaryKind::Square => g.iter().zip(x).map(|(&gi, &xi)| gi * (xi + xi)).collect(),
            UnaryKind::Abs => g
                .iter()
                .zip(x)
                .map(|(&gi, &xi)| {
                    if xi > T::ZERO {
                        gi
                    } else if xi < T::ZERO {
                        -gi
                    } else {
                        T::ZERO
                    }
                })
                .collect(),
            UnaryKind::Log1p => g.iter().zip(x).map(|(&gi, &xi)| gi / (T::ONE + xi)).collect(),
        };
        vec![Some(gx)]
    }
}

fn unary<T: Scalar>(x: &Tensor<T>, kind: UnaryKind<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_op(x.shape().to_vec(), data, &[x], Unary { kind })
}

pub fn scale<T: Scalar>(x: &Tensor<T>, s: T) -> Tensor<T> {
    unary(x, UnaryKind::Scale(s), |v| v * s)
}

pub fn add_scalar<T: Scalar>(x: &Tensor<T>, c: T) -> Tensor<T> {
    unary(x, UnaryKind::Offset, |v| v + c)
}

pub fn square<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, UnaryKind::Square, |v| v * v)
}

pub fn abs<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, UnaryKind::Abs, |v| v.abs())
}

/// `ln(1 + x)`, the tone compression applied before the discriminator and
/// the perceptual extractor. Inputs must be greater than -1.
pub fn log1p<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, UnaryKind::Log1p, |v| v.ln_1p())
}
