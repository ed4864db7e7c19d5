use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Backward;
use super::{Scalar, Tensor};
use crate::error::Result;

/// Finite-difference settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor: gradients smaller than this are compared
    /// absolutely against `tolerance * floor`.
    pub floor: f64,
    /// Upper bound on checked elements per input (evenly strided).
    pub max_elements: usize,
}

impl GradCheckConfig {
    /// 64-bit check mode.
    pub fn precise() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-3,
            max_elements: usize::MAX,
        }
    }

    /// 32-bit mode for [`grad_check_single`]: differences are taken in
    /// 64-bit arithmetic, so the step stays small.
    pub fn single() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-2,
            floor: 1e-3,
            max_elements: usize::MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    /// Names of inputs whose gradient failed the check.
    pub fn failures(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect()
    }
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against
/// central differences, per named input.
pub fn grad_check<T, F>(f: F, inputs: &[(&str, Tensor<T>)], cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
{
    let analytic = analytic_grads(&f, inputs)?;
    compare(&f, inputs, &analytic, cfg)
}

/// 32-bit check: reverse-mode gradients of `f32_fn` against central
/// differences of `f64_fn`, the same function in 64-bit arithmetic, at the
/// same inputs. Differencing in `f32` measures round-off of the forward
/// pass rather than the backward rules.
pub fn grad_check_single<F, G>(
    f32_fn: F,
    f64_fn: G,
    inputs: &[(&str, Tensor<f32>)],
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f32>]) -> Result<Tensor<f32>>,
    G: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let analytic = analytic_grads(&f32_fn, inputs)?;
    let wide = inputs
        .iter()
        .map(|(n, t)| Ok((*n, Tensor::new(t.shape(), t.data().iter().map(|&v| v as f64).collect())?)))
        .collect::<Result<Vec<_>>>()?;
    compare(&f64_fn, &wide, &analytic, cfg)
}

fn analytic_grads<T, F>(f: &F, inputs: &[(&str, Tensor<T>)]) -> Result<Vec<Vec<f64>>>
where
    T: Scalar,
    F: Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
{
    let leaves: Vec<Tensor<T>> = inputs
        .iter()
        .map(|(_, t)| Tensor::param(t.shape(), t.to_vec()))
        .collect::<Result<_>>()?;
    f(&leaves)?.backward()?;
    Ok(leaves
        .iter()
        .map(|leaf| match leaf.grad() {
            Some(g) => g.iter().map(|v| v.to_f64()).collect(),
            None => vec![0.0; leaf.numel()],
        })
        .collect())
}

fn compare<T, F>(f: &F, inputs: &[(&str, Tensor<T>)], analytic: &[Vec<f64>], cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
{
    let constants: Vec<Tensor<T>> = inputs.iter().map(|(_, t)| t.detach()).collect();
    let eval = |which: usize, idx: usize, delta: f64| -> Result<f64> {
        let mut args = constants.clone();
        let mut data = args[which].to_vec();
        data[idx] = T::from_f64(data[idx].to_f64() + delta);
        args[which] = Tensor::new(args[which].shape(), data)?;
        Ok(f(&args)?.item().to_f64())
    };

    let mut entries = Vec::with_capacity(inputs.len());
    for (which, ((name, input), analytic)) in inputs.iter().zip(analytic).enumerate() {
        let n = input.numel();
        let count = n.min(cfg.max_elements);
        let mut worst = 0.0f64;
        for j in 0..count {
            let idx = if count == n { j } else { j * n / count };
            let numeric = (eval(which, idx, cfg.step)? - eval(which, idx, -cfg.step)?) / (2.0 * cfg.step);
            let a = analytic[idx];
            let denom = a.abs().max(numeric.abs()).max(cfg.floor);
            let err = (a - numeric).abs() / denom;
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
        entries.push(GradCheckEntry {
            name: String::from(*name),
            max_rel_err: worst,
            checked: count,
            passed: worst <= cfg.tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        entries,
    })
}

struct FaultyIdentity;

impl<T: Scalar> Backward<T> for FaultyIdentity {
    fn name(&self) -> &'static str {
        "faulty_identity"
    }
    fn backward(&self, _inputs: &[Tensor<T>], _out: &[T], g: &[T], _needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.iter().map(|&v| v + v).collect())]
    }
}

/// Identity whose backward rule is deliberately off by a factor of two.
/// Exists only as a negative control for gradient-check harnesses.
#[doc(hidden)]
pub fn faulty_identity<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_op(x.shape().to_vec(), x.to_vec(), &[x], FaultyIdentity)
}
