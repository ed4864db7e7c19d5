//! Training losses: smooth-L1 content loss on indirect radiance,
//! least-squares adversarial loss per color channel, and a perceptual loss
//! on the composited image through a frozen convolutional feature stack.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::numerics::ops::{add, add_scalar, conv2d, l1, leaky_relu, log1p, mean, scale, square, LEAKY_SLOPE};
use crate::numerics::{xavier_values, ParamStore, Rng, Scalar, Tensor};

pub use crate::numerics::ops::smooth_l1;

/// Weights of the total loss.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossWeights {
    pub content: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    /// Per-tap perceptual weights; empty means equal weights summing to one.
    pub layer_weights: Vec<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            content: 0.7,
            perceptual: 0.28,
            adversarial: 0.02,
            layer_weights: Vec::new(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.content, self.perceptual, self.adversarial];
        if all.iter().chain(&self.layer_weights).any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Perceptual tap weights for an extractor with `taps` tap points.
    pub fn lambdas(&self, taps: usize) -> Result<Vec<f64>> {
        if self.layer_weights.is_empty() {
            return Ok(vec![1.0 / taps.max(1) as f64; taps]);
        }
        if self.layer_weights.len() != taps {
            return Err(invalid(format!(
                "{} perceptual layer weights for {taps} taps",
                self.layer_weights.len()
            )));
        }
        Ok(self.layer_weights.clone())
    }
}

/// One frozen convolution followed by a leaky ReLU; its output is a tap.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenLayer {
    /// `[out, in, k, k]`.
    pub shape: [usize; 4],
    pub weight: Vec<f32>,
    pub stride: usize,
}

/// Fixed feature stack standing in for a pre-trained image network.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenFeatureExtractor {
    layers: Vec<FrozenLayer>,
}

impl FrozenFeatureExtractor {
    pub const DEFAULT_WIDTHS: [usize; 3] = [8, 16, 32];

    /// Xavier-initialized 3x3 stride-2 stack over RGB, one tap per layer.
    pub fn random(seed: u64, widths: &[usize]) -> Self {
        let mut rng = Rng::derive(seed, &[0xFEA7]);
        let mut cin = 3;
        let layers = widths
            .iter()
            .map(|&w| {
                let shape = [w, cin, 3, 3];
                cin = w;
                FrozenLayer {
                    shape,
                    weight: xavier_values(&shape, &mut rng),
                    stride: 2,
                }
            })
            .collect();
        FrozenFeatureExtractor { layers }
    }

    /// Explicit layers; tap resolutions must strictly decrease after the first.
    pub fn from_layers(layers: Vec<FrozenLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("extractor needs at least one layer"));
        }
        let mut cin = 3;
        for (i, l) in layers.iter().enumerate() {
            let [o, c, k, k2] = l.shape;
            if c != cin || k != k2 || k % 2 == 0 || o == 0 || l.weight.len() != o * c * k * k {
                return Err(invalid(format!("extractor layer {i} has inconsistent shape {:?}", l.shape)));
            }
            if l.stride == 0 || (i > 0 && l.stride < 2) {
                return Err(invalid("extractor tap scales must strictly decrease"));
            }
            cin = o;
        }
        Ok(FrozenFeatureExtractor { layers })
    }

    pub fn layers(&self) -> &[FrozenLayer] {
        &self.layers
    }

    pub fn taps(&self) -> usize {
        self.layers.len()
    }

    /// Smallest input side the deepest tap accepts.
    pub fn min_resolution(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    /// Tap features of `x [B, 3, H, W]`.
    pub fn features<T: Scalar>(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let s = x.shape();
        let m = self.min_resolution();
        if s.len() != 4 || s[1] != 3 || s[2] < m || s[3] < m {
            return Err(shape_err("perceptual features", s, &[0, 3, m, m]));
        }
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let w = Tensor::new(&l.shape, l.weight.iter().map(|&v| T::from_f64(v as f64)).collect())?;
            h = leaky_relu(&conv2d(&h, &w, None, l.stride, l.shape[2] / 2)?, T::from_f64(LEAKY_SLOPE));
            out.push(h.clone());
        }
        Ok(out)
    }

    /// Weights as named parameters (`percep.l{i}.w`) for checkpoints.
    pub fn to_store(&self) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        for (i, l) in self.layers.iter().enumerate() {
            s.insert(&format!("percep.l{i}.w"), &l.shape, l.weight.clone())
                .expect("unique names");
        }
        s
    }

    /// Rebuild a stride-2 stack from `percep.l{i}.w` entries.
    pub fn from_store(store: &ParamStore<f32>) -> Result<Self> {
        let mut layers = Vec::new();
        while let Some(p) = store.get(&format!("percep.l{}.w", layers.len())) {
            let shape: [usize; 4] = p
                .shape
                .as_slice()
                .try_into()
                .map_err(|_| invalid("extractor weights must be rank 4"))?;
            layers.push(FrozenLayer {
                shape,
                weight: p.data.clone(),
                stride: 2,
            });
        }
        Self::from_layers(layers)
    }
}

/// Smooth-L1 (delta = 1) between predicted and reference indirect radiance.
pub fn content_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    smooth_l1(pred, target, T::ONE)
}

/// Least-squares GAN losses `(loss_D, loss_G)` from patch score maps of the
/// mono channels. All channels have equal-sized maps, so the overall mean
/// equals the average of per-channel means.
pub fn adversarial_losses<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let half = T::from_f64(0.5);
    let d_real = mean(&square(&add_scalar(real, -T::ONE)));
    let d_fake = mean(&square(fake));
    let loss_d = scale(&add(&d_real, &d_fake)?, half);
    Ok((loss_d, generator_adversarial_loss(fake)))
}

/// Generator half of the least-squares GAN loss, `mean((D(fake) - 1)^2)`.
pub fn generator_adversarial_loss<T: Scalar>(fake: &Tensor<T>) -> Tensor<T> {
    mean(&square(&add_scalar(fake, -T::ONE)))
}

/// `sum_l lambda_l * L1(phi_l(log1p target), phi_l(log1p pred))` on RGB images.
pub fn perceptual_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    extractor: &FrozenFeatureExtractor,
    lambdas: &[f64],
) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(shape_err("perceptual_loss", pred.shape(), target.shape()));
    }
    if lambdas.len() != extractor.taps() {
        return Err(invalid("one perceptual weight per tap required"));
    }
    let fp = extractor.features(&log1p(pred))?;
    let ft = extractor.features(&log1p(&target.detach()))?;
    let mut total = Tensor::scalar(T::ZERO);
    for ((a, b), &lam) in fp.iter().zip(&ft).zip(lambdas) {
        if lam != 0.0 {
            total = add(&total, &scale(&l1(a, b)?, T::from_f64(lam)))?;
        }
    }
    Ok(total)
}

/// `w_a * L_a + w_c * L_c + w_p * L_p`.
pub fn total_loss<T: Scalar>(
    content: &Tensor<T>,
    perceptual: &Tensor<T>,
    adversarial_g: &Tensor<T>,
    weights: &LossWeights,
) -> Result<Tensor<T>> {
    let c = scale(content, T::from_f64(weights.content));
    let p = scale(perceptual, T::from_f64(weights.perceptual));
    let a = scale(adversarial_g, T::from_f64(weights.adversarial));
    add(&add(&a, &c)?, &p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn total_loss_values() {
        let w = LossWeights::default();
        assert_eq!(w.content + w.perceptual + w.adversarial, 1.0);
        let t = total_loss(&s(1.0), &s(1.0), &s(1.0), &w).unwrap().item();
        assert!((t - 1.0).abs() < 1e-15);
        assert_eq!(total_loss(&s(0.0), &s(0.0), &s(0.0), &w).unwrap().item(), 0.0);
        let t = total_loss(&s(2.0), &s(0.5), &s(10.0), &w).unwrap().item();
        assert!((t - 1.74).abs() < 1e-12);
        // Linear in each component.
        for (i, want) in [0.7, 0.28, 0.02].into_iter().enumerate() {
            let mut v = [0.0; 3];
            v[i] = 1.0;
            let t = total_loss(&s(v[0]), &s(v[1]), &s(v[2]), &w).unwrap().item();
            assert!((t - want).abs() < 1e-15);
        }
    }

    #[test]
    fn lambdas_default_equal() {
        let w = LossWeights::default();
        assert_eq!(w.lambdas(4).unwrap(), vec![0.25; 4]);
        let w = LossWeights {
            layer_weights: vec![1.0],
            ..LossWeights::default()
        };
        assert!(w.lambdas(3).is_err());
        let bad = LossWeights {
            content: -1.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
    }
}
