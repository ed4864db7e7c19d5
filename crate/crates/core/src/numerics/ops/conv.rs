use alloc::vec;
use alloc::vec::Vec;

use super::shape::upsample_nearest2x;
use crate::error::{invalid, shape_err, Result};
use crate::numerics::par;
use crate::numerics::scalar::{gemm, gemm_ldc, MatRef};
use crate::numerics::tensor::{add_into, Backward};
use crate::numerics::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
    /// 1x1 stride-1 unpadded: the input plane block already is the column matrix.
    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output rows per column tile; keeps the unrolled patch matrix cache-sized.
const TILE_COLS: usize = 2048;

fn tile_rows(g: &Geometry) -> usize {
    (TILE_COLS / g.wo.max(1)).clamp(1, g.ho.max(1))
}

/// Patch matrix `[C*k*k, (oy1 - oy0) * wo]` for output rows `oy0..oy1`.
fn im2col<T: Scalar>(x: &[T], g: &Geometry, oy0: usize, oy1: usize, cols: &mut Vec<T>) {
    let (h, w, k, s, p, wo) = (g.h, g.w, g.k, g.stride, g.pad, g.wo);
    let n = (oy1 - oy0) * wo;
    cols.clear();
    cols.resize(g.rows() * n, T::ZERO);
    for ci in 0..g.c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                // Valid output columns: 0 <= ox * s + kx - p < w.
                let ox_lo = (p.saturating_sub(kx) + s - 1) / s;
                let ox_hi = if w + p > kx { ((w + p - kx - 1) / s + 1).min(wo) } else { 0 };
                for oy in oy0..oy1 {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize || ox_lo >= ox_hi {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let out_row = &mut dst[(oy - oy0) * wo..(oy - oy0 + 1) * wo];
                    if s == 1 {
                        let ix0 = ox_lo + kx - p;
                        out_row[ox_lo..ox_hi].copy_from_slice(&src_row[ix0..ix0 + ox_hi - ox_lo]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            out_row[ox] = src_row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry, oy0: usize, oy1: usize, dx: &mut [T]) {
    let (h, w, k, s, p, wo) = (g.h, g.w, g.k, g.stride, g.pad, g.wo);
    let n = (oy1 - oy0) * wo;
    for ci in 0..g.c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                let ox_lo = (p.saturating_sub(kx) + s - 1) / s;
                let ox_hi = if w + p > kx { ((w + p - kx - 1) / s + 1).min(wo) } else { 0 };
                for oy in oy0..oy1 {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &src[(oy - oy0) * wo..(oy - oy0 + 1) * wo];
                    for ox in ox_lo..ox_hi {
                        in_row[ox * s + kx - p] += src_row[ox];
                    }
                }
            }
        }
    }
}

/// One image: `out [F, ho*wo] = W [F, C*k*k] * patches`.
fn forward_image<T: Scalar>(xi: &[T], wmat: MatRef<'_, T>, g: &Geometry, out: &mut [T]) {
    if g.pointwise() {
        gemm(wmat, MatRef::row_major(xi, g.rows(), g.cols()), T::ZERO, out);
        return;
    }
    let mut cols = Vec::new();
    let step = tile_rows(g);
    let mut oy0 = 0;
    while oy0 < g.ho {
        let oy1 = (oy0 + step).min(g.ho);
        im2col(xi, g, oy0, oy1, &mut cols);
        let n = (oy1 - oy0) * g.wo;
        gemm_ldc(wmat, MatRef::row_major(&cols, g.rows(), n), T::ZERO, &mut out[oy0 * g.wo..], g.cols());
        oy0 = oy1;
    }
}

struct Conv2d {
    geo: Geometry,
    has_bias: bool,
}

impl<T: Scalar> Backward<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, inputs: &[Tensor<T>], _out: &[T], grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = self.geo;
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let in_len = g.c * g.h * g.w;
        let out_len = g.f * g.cols();
        let (need_x, need_w) = (needs[0], needs[1]);
        let wmat = MatRef::row_major(w, g.f, g.rows());

        let flipped = (need_x && g.stride == 1 && 2 * g.pad + 1 == g.k && !g.pointwise()).then(|| {
            let kk = g.k * g.k;
            let mut out = vec![T::ZERO; w.len()];
            for f in 0..g.f {
                for c in 0..g.c {
                    for t in 0..kk {
                        out[(c * g.f + f) * kk + t] = w[(f * g.c + c) * kk + kk - 1 - t];
                    }
                }
            }
            out
        });
        let per_image: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = par::map_indexed(g.n, |i| {
            let xi = &x[i * in_len..(i + 1) * in_len];
            let gi = &grad[i * out_len..(i + 1) * out_len];
            let gmat = MatRef::row_major(gi, g.f, g.cols());
            if g.pointwise() {
                let dx = need_x.then(|| {
                    let mut dx = vec![T::ZERO; in_len];
                    gemm(wmat.t(), gmat, T::ZERO, &mut dx);
                    dx
                });
                let dw = need_w.then(|| {
                    let mut dw = vec![T::ZERO; g.f * g.rows()];
                    gemm(gmat, MatRef::row_major(xi, g.rows(), g.cols()).t(), T::ZERO, &mut dw);
                    dw
                });
                return (dx, dw);
            }
            // Same-size stride-1 convolution: the input gradient is itself a
            // forward convolution of the output gradient with flipped kernels.
            let same = g.stride == 1 && 2 * g.pad + 1 == g.k;
            let mut dx = need_x.then(|| {
                let mut dx = vec![T::ZERO; in_len];
                if same {
                    let tg = Geometry {
                        c: g.f,
                        h: g.ho,
                        w: g.wo,
                        f: g.c,
                        ..g
                    };
                    forward_image(gi, MatRef::row_major(flipped.as_ref().unwrap(), g.c, g.f * g.k * g.k), &tg, &mut dx);
                }
                dx
            });
            let mut dw = need_w.then(|| vec![T::ZERO; g.f * g.rows()]);
            let mut cols = Vec::new();
            let step = tile_rows(&g);
            let mut oy0 = 0;
            while oy0 < g.ho {
                let oy1 = (oy0 + step).min(g.ho);
                let n = (oy1 - oy0) * g.wo;
                let gt = MatRef {
                    data: &gi[oy0 * g.wo..],
                    rows: g.f,
                    cols: n,
                    rs: g.cols(),
                    cs: 1,
                };
                if let Some(dw) = dw.as_mut() {
                    im2col(xi, &g, oy0, oy1, &mut cols);
                    gemm(gt, MatRef::row_major(&cols, g.rows(), n).t(), T::ONE, dw);
                }
                if let (Some(dx), false) = (dx.as_mut(), same) {
                    cols.clear();
                    cols.resize(g.rows() * n, T::ZERO);
                    gemm(wmat.t(), gt, T::ZERO, &mut cols);
                    col2im(&cols, &g, oy0, oy1, dx);
                }
                oy0 = oy1;
            }
            (dx, dw)
        });

        let mut dx_all = need_x.then(|| Vec::with_capacity(g.n * in_len));
        let mut dw_all = need_w.then(|| vec![T::ZERO; g.f * g.rows()]);
        for (dx, dw) in per_image {
            if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
                all.extend_from_slice(&dx);
            }
            if let (Some(all), Some(dw)) = (dw_all.as_mut(), dw) {
                add_into(all, &dw);
            }
        }
        let mut out = vec![dx_all, dw_all];
        if self.has_bias {
            let db = needs[2].then(|| {
                let mut db = vec![T::ZERO; g.f];
                for i in 0..g.n {
                    for f in 0..g.f {
                        let base = i * out_len + f * g.cols();
                        db[f] += grad[base..base + g.cols()].iter().copied().sum::<T>();
                    }
                }
                db
            });
            out.push(db);
        }
        out
    }
}

/// 2-D cross-correlation of `input [N, C, H, W]` with `kernel [F, C, k, k]`
/// (odd `k`), optional per-filter `bias [F]`.
///
/// Output extent is `floor((H + 2p - k) / stride) + 1` per axis.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = match *input.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => return Err(shape_err("conv2d", input.shape(), kernel.shape())),
    };
    let (f, kc, k) = match *kernel.shape() {
        [f, kc, k1, k2] if k1 == k2 => (f, kc, k1),
        _ => return Err(shape_err("conv2d", input.shape(), kernel.shape())),
    };
    if kc != c {
        return Err(shape_err("conv2d", input.shape(), kernel.shape()));
    }
    if k % 2 == 0 {
        return Err(invalid(alloc::format!("conv2d kernel size {k} must be odd")));
    }
    if stride == 0 {
        return Err(invalid("conv2d stride must be positive"));
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(shape_err("conv2d", input.shape(), kernel.shape()));
    }
    if let Some(b) = bias {
        if b.shape() != [f] {
            return Err(shape_err("conv2d bias", kernel.shape(), b.shape()));
        }
    }
    let ho = (h + 2 * padding - k) / stride + 1;
    let wo = (w + 2 * padding - k) / stride + 1;
    let geo = Geometry {
        n,
        c,
        h,
        w,
        f,
        k,
        stride,
        pad: padding,
        ho,
        wo,
    };
    let in_len = c * h * w;
    let out_len = f * ho * wo;
    let x = input.data();
    let wmat = MatRef::row_major(kernel.data(), f, geo.rows());
    let bias_data = bias.map(|b| b.data());

    let mut data = vec![T::ZERO; n * out_len];
    par::for_each_chunk(&mut data, out_len.max(1), |i, out| {
        forward_image(&x[i * in_len..(i + 1) * in_len], wmat, &geo, out);
        if let Some(b) = bias_data {
            for fi in 0..f {
                for v in &mut out[fi * ho * wo..(fi + 1) * ho * wo] {
                    *v += b[fi];
                }
            }
        }
    });

    let out_shape = vec![n, f, ho, wo];
    let op = Conv2d {
        geo,
        has_bias: bias.is_some(),
    };
    Ok(match bias {
        Some(b) => Tensor::from_op(out_shape, data, &[input, kernel, b], op),
        None => Tensor::from_op(out_shape, data, &[input, kernel], op),
    })
}

/// Decoder upsampling: nearest-neighbour 2x replication followed by a
/// same-size convolution (padding `(k - 1) / 2`).
pub fn upsample_conv<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let k = kernel.shape().get(2).copied().unwrap_or(1);
    let up = upsample_nearest2x(input)?;
    conv2d(&up, kernel, bias, 1, k / 2)
}
