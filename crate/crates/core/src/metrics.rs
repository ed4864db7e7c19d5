//! Image quality metrics on tone-mapped images, and the direct-only and
//! constant-ambient reference predictors.
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::scenegen::{FrameRecord, Image, DEMOD_EPSILON};

/// Value reported in place of an infinite PSNR (identical images).
pub const PSNR_CAP: f64 = 99.0;
/// SSIM window side.
pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Reinhard `x / (1 + x)` followed by gamma `1/2.2`, per channel.
pub fn tone_map(hdr: &Image) -> Result<Image> {
    if hdr.data.iter().any(|&v| !(v >= 0.0)) {
        return Err(invalid("tone_map needs nonnegative radiance"));
    }
    Ok(hdr.map(|v| {
        let x = v as f64;
        libm::pow(x / (1.0 + x), 1.0 / 2.2) as f32
    }))
}

fn mse(a: &[f32], b: &[f32]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    s / a.len().max(1) as f64
}

/// `10 log10(1 / MSE)` for images in `[0, 1]`; infinite when identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same("psnr", b)?;
    let m = mse(&a.data, &b.data);
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * libm::log10(m) })
}

/// PSNR over the pixels where `mask` is true (mask is per pixel, shared by channels).
pub fn psnr_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    a.check_same("psnr_masked", b)?;
    if mask.len() != a.pixels() {
        return Err(shape_err("psnr_masked", &[a.pixels()], &[mask.len()]));
    }
    let (mut s, mut n) = (0.0, 0usize);
    for c in 0..a.channels {
        for (i, (&x, &y)) in a.plane(c).iter().zip(b.plane(c)).enumerate() {
            if mask[i] {
                let d = x as f64 - y as f64;
                s += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(invalid("empty PSNR mask"));
    }
    let m = s / n as f64;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * libm::log10(m) })
}

/// PSNR on linear radiance with the reference maximum as peak.
pub fn psnr_linear(pred: &Image, reference: &Image) -> Result<f64> {
    pred.check_same("psnr_linear", reference)?;
    let peak = reference.data.iter().fold(0.0f64, |m, &v| m.max(v as f64));
    let m = mse(&pred.data, &reference.data);
    Ok(if m == 0.0 {
        f64::INFINITY
    } else if peak == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * libm::log10(peak * peak / m)
    })
}

pub fn cap_psnr(v: f64) -> f64 {
    v.min(PSNR_CAP)
}

/// Mean SSIM over all 8x8 windows (stride 1) and channels, uniform weights.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same("ssim", b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(invalid("image smaller than the SSIM window"));
    }
    let k = SSIM_WINDOW;
    let n = (k * k) as f64;
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut total = 0.0;
    for c in 0..a.channels {
        let (pa, pb) = (a.plane(c), b.plane(c));
        // Summed-area tables of x, y, x^2, y^2, xy in f64.
        let stride = w + 1;
        let mut tables = [(); 5].map(|_| alloc::vec![0.0f64; stride * (h + 1)]);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (pa[y * w + x] as f64, pb[y * w + x] as f64);
                let vals = [u, v, u * u, v * v, u * v];
                for (t, val) in tables.iter_mut().zip(vals) {
                    t[(y + 1) * stride + x + 1] =
                        val + t[y * stride + x + 1] + t[(y + 1) * stride + x] - t[y * stride + x];
                }
            }
        }
        let window = |t: &[f64], x: usize, y: usize| {
            t[(y + k) * stride + x + k] - t[y * stride + x + k] - t[(y + k) * stride + x] + t[y * stride + x]
        };
        let mut acc = 0.0;
        for y in 0..oh {
            for x in 0..ow {
                let ma = window(&tables[0], x, y) / n;
                let mb = window(&tables[1], x, y) / n;
                let va = (window(&tables[2], x, y) / n - ma * ma).max(0.0);
                let vb = (window(&tables[3], x, y) / n - mb * mb).max(0.0);
                let cov = window(&tables[4], x, y) / n - ma * mb;
                acc += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
        total += acc / (ow * oh) as f64;
    }
    Ok(total / a.channels as f64)
}

/// Per-channel mean of `S_ind` over training frames, where `R >= eps`.
pub fn ambient_constant(train: &[&FrameRecord]) -> Result<[f64; 3]> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = [0.0f64; 3];
    let mut count = [0usize; 3];
    for f in train {
        for c in 0..3 {
            for (&s, &r) in f.s_ind.plane(c).iter().zip(f.r.plane(c)) {
                if r >= DEMOD_EPSILON {
                    sum[c] += s as f64;
                    count[c] += 1;
                }
            }
        }
    }
    Ok([0, 1, 2].map(|c| if count[c] == 0 { 0.0 } else { sum[c] / count[c] as f64 }))
}

/// `L_d + R * k`.
pub fn baseline_ambient(frame: &FrameRecord, k: [f64; 3]) -> Image {
    let mut out = frame.l_d.clone();
    for c in 0..3 {
        let r = frame.r.plane(c).to_vec();
        for (o, rv) in out.plane_mut(c).iter_mut().zip(r) {
            *o += rv * k[c] as f32;
        }
    }
    out
}

/// Direct light only.
pub fn baseline_direct(frame: &FrameRecord) -> Image {
    frame.l_d.clone()
}

/// Quality of one prediction against a reference.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scores {
    /// Tone-mapped PSNR in dB, capped at [`PSNR_CAP`].
    pub psnr: f64,
    /// Tone-mapped SSIM.
    pub ssim: f64,
    /// Linear-radiance PSNR (peak = reference maximum), capped.
    pub psnr_linear: f64,
}

impl Scores {
    pub fn compute(pred: &Image, reference: &Image) -> Result<Self> {
        let (tp, tr) = (tone_map(pred)?, tone_map(reference)?);
        Ok(Scores {
            psnr: cap_psnr(psnr(&tp, &tr)?),
            ssim: ssim(&tp, &tr)?,
            psnr_linear: cap_psnr(psnr_linear(pred, reference)?),
        })
    }

    fn mean(rows: &[Scores]) -> Scores {
        let n = rows.len().max(1) as f64;
        Scores {
            psnr: rows.iter().map(|s| s.psnr).sum::<f64>() / n,
            ssim: rows.iter().map(|s| s.ssim).sum::<f64>() / n,
            psnr_linear: rows.iter().map(|s| s.psnr_linear).sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameScores {
    pub id: String,
    pub model: Scores,
    pub ambient: Scores,
    pub direct: Scores,
}

/// Held-out evaluation of a model and both baselines. `C` carries the
/// configuration echo.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport<C = ()> {
    pub frames: Vec<FrameScores>,
    pub mean_model: Scores,
    pub mean_ambient: Scores,
    pub mean_direct: Scores,
    /// Ambient constant per channel.
    pub ambient_k: [f64; 3],
    pub dataset_hash: String,
    pub config: C,
}

/// Score model predictions `pred[i]` of the full image `L` for `frames[i]`.
pub fn evaluate<C>(
    frames: &[(&str, &FrameRecord)],
    predictions: &[Image],
    ambient_k: [f64; 3],
    dataset_hash: String,
    config: C,
) -> Result<EvalReport<C>> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if frames.len() != predictions.len() {
        return Err(shape_err("evaluate", &[frames.len()], &[predictions.len()]));
    }
    let rows: Vec<FrameScores> = crate::numerics::map_indexed(frames.len(), |i| {
        let (id, f) = frames[i];
        let reference = f.global();
        Ok(FrameScores {
            id: String::from(id),
            model: Scores::compute(&predictions[i], &reference)?,
            ambient: Scores::compute(&baseline_ambient(f, ambient_k), &reference)?,
            direct: Scores::compute(&baseline_direct(f), &reference)?,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let pick = |g: fn(&FrameScores) -> Scores| Scores::mean(&rows.iter().map(g).collect::<Vec<_>>());
    Ok(EvalReport {
        mean_model: pick(|r| r.model),
        mean_ambient: pick(|r| r.ambient),
        mean_direct: pick(|r| r.direct),
        frames: rows,
        ambient_k,
        dataset_hash,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f32, w: usize, h: usize) -> Image {
        Image::from_data(w, h, 3, alloc::vec![v; 3 * w * h]).unwrap()
    }

    #[test]
    fn tone_map_values() {
        let img = Image::from_data(3, 1, 1, alloc::vec![0.0, 1.0, 1e30]).unwrap();
        let t = tone_map(&img).unwrap();
        assert_eq!(t.data[0], 0.0);
        assert!((t.data[1] - 0.7297).abs() < 1e-4);
        assert!((t.data[1] as f64 - libm::pow(0.5, 1.0 / 2.2)).abs() < 1e-7);
        assert!((t.data[2] - 1.0).abs() < 1e-6);
        assert!(tone_map(&constant(-1.0, 2, 2)).is_err());
    }

    #[test]
    fn psnr_closed_forms() {
        let a = constant(0.5, 8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(cap_psnr(psnr(&a, &a).unwrap()), PSNR_CAP);
        let b = constant(0.6, 8, 8);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&a, &constant(0.5, 4, 4)).is_err());
    }

    #[test]
    fn ssim_closed_forms() {
        let a = constant(0.0, 8, 8);
        let b = constant(1.0, 8, 8);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let v = ssim(&a, &b).unwrap();
        assert!(v < 0.01 && (v - SSIM_C1 / (1.0 + SSIM_C1)).abs() < 1e-12);
        assert!(ssim(&constant(0.0, 7, 8), &constant(0.0, 7, 8)).is_err());
    }
}
