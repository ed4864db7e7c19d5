use alloc::vec;
use alloc::vec::Vec;

use super::params::ParamStore;
use super::Scalar;
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults follow common GAN practice
/// (`lr = 2e-4`, `beta1 = 0.5`).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every parameter of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    /// `(m, v)` per parameter, in store order.
    pub moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        AdamState {
            config,
            step: 0,
            moments: params
                .iter()
                .map(|p| (vec![T::ZERO; p.data.len()], vec![T::ZERO; p.data.len()]))
                .collect(),
        }
    }

    /// One bias-corrected Adam update. `grads` is in store order; a `None`
    /// entry is an error naming the parameter.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        if grads.len() != params.len() || self.moments.len() != params.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.moments.len()
            )));
        }
        if let Some(p) = params.iter().zip(grads).find(|(_, g)| g.is_none()).map(|(p, _)| p) {
            return Err(Error::MissingGradient(p.name.clone()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            let g = g.as_ref().expect("checked above");
            for i in 0..p.data.len() {
                let gi = g[i].to_f64();
                let mi = beta1 * m[i].to_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * v[i].to_f64() + (1.0 - beta2) * gi * gi;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                let update = lr * (mi / c1) / (libm::sqrt(vi / c2) + eps);
                p.data[i] = T::from_f64(p.data[i].to_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f32) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert("w", &[1], vec![v]).unwrap();
        s
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut s = store(0.3);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        adam.step(&mut s, &[Some(vec![0.0])]).unwrap();
        assert_eq!(s.get("w").unwrap().data, vec![0.3]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        adam.step(&mut s, &[Some(vec![3.7])]).unwrap();
        let moved = (1.0 - s.get("w").unwrap().data[0] as f64).abs();
        assert!((moved - 2e-4).abs() < 1e-6, "{moved}");
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let cfg = AdamConfig::default();
        let (g, mut p, mut m, mut v) = (0.8f64, 0.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        let mut s = store(0.5);
        let mut adam = AdamState::new(cfg, &s);
        for _ in 0..2 {
            adam.step(&mut s, &[Some(vec![0.8])]).unwrap();
        }
        assert!((s.get("w").unwrap().data[0] as f64 - p).abs() < 1e-7);
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut s = store(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        assert_eq!(adam.step(&mut s, &[None]), Err(Error::MissingGradient("w".into())));
    }
}
