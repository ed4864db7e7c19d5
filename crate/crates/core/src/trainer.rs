//! Adversarial training: exposure augmentation, the alternating
//! discriminator/generator step, the epoch loop with held-out evaluation,
//! and batched inference.
//!
//! All randomness is derived from `(train seed, epoch, iteration)`, so the
//! epoch and iteration counters are the only RNG cursors a resumed run needs.
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::metrics::Scores;
use crate::network::{Mode, NetInputs, Network, Prediction};
use crate::numerics::{map_indexed, AdamConfig, AdamState, ParamStore, Rng, Tensor};
use crate::objective::{
    adversarial_losses, content_loss, generator_adversarial_loss, perceptual_loss, total_loss, FrozenFeatureExtractor,
    LossWeights,
};
use crate::scenegen::{FrameRecord, Image};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for initialization, shuffling, augmentation and dropout.
    pub seed: u64,
    /// Seed of the train/held-out split.
    pub split_seed: u64,
    /// Frames withheld for evaluation.
    pub held_out: usize,
    /// Exposure multipliers are drawn log-uniformly from this range; `[1, 1]` disables augmentation.
    pub alpha_range: [f64; 2],
    pub weights: LossWeights,
    /// Evaluate every this many epochs (0 disables evaluation).
    pub eval_every: usize,
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
    /// Frozen perceptual extractor seed and widths.
    pub extractor_seed: u64,
    pub extractor_widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 4,
            seed: 7,
            split_seed: 11,
            held_out: 32,
            alpha_range: [0.5, 2.0],
            weights: LossWeights::default(),
            eval_every: 1,
            generator_adam: AdamConfig::default(),
            discriminator_adam: AdamConfig::default(),
            extractor_seed: 0xFEA7,
            extractor_widths: FrozenFeatureExtractor::DEFAULT_WIDTHS.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.alpha_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid("alpha range must be positive and ordered"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.extractor_widths.is_empty() {
            return Err(invalid("perceptual extractor needs at least one layer"));
        }
        self.weights.validate()
    }

    pub fn extractor(&self) -> FrozenFeatureExtractor {
        FrozenFeatureExtractor::random(self.extractor_seed, &self.extractor_widths)
    }
}

/// Everything that changes during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub generator: ParamStore<f32>,
    pub discriminator: ParamStore<f32>,
    pub generator_opt: AdamState<f32>,
    pub discriminator_opt: AdamState<f32>,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimizer steps.
    pub iteration: u64,
    /// Best held-out tone-mapped PSNR so far (`-inf` before any evaluation).
    pub best_psnr: f64,
}

impl TrainState {
    pub fn new(net: &Network, cfg: &TrainConfig) -> Self {
        let generator = net.init_generator(cfg.seed);
        let discriminator = net.init_discriminator(cfg.seed);
        TrainState {
            generator_opt: AdamState::new(cfg.generator_adam, &generator),
            discriminator_opt: AdamState::new(cfg.discriminator_adam, &discriminator),
            generator,
            discriminator,
            epoch: 0,
            iteration: 0,
            best_psnr: f64::NEG_INFINITY,
        }
    }
}

/// Loss values of one step. `discriminator` is the discriminator loss before its update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepLosses {
    pub content: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub discriminator: f64,
}

/// Scale every radiance buffer by `alpha`. Reflectance and geometry are
/// exposure invariant.
pub fn augment_exposure(frame: &FrameRecord, alpha: f32) -> Result<FrameRecord> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("exposure multiplier must be positive"));
    }
    let mut out = frame.clone();
    if alpha != 1.0 {
        for img in [&mut out.l_d, &mut out.l_ind, &mut out.s_ind] {
            img.data.iter_mut().for_each(|v| *v *= alpha);
        }
    }
    Ok(out)
}

/// Deterministic shuffle of `0..n` into `(train, held_out)` index lists.
pub fn split_indices(n: usize, held_out: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut Rng::derive(seed, &[0x5B17]));
    let k = held_out.min(n);
    let test = idx.split_off(n - k);
    (idx, test)
}

fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.range_inclusive(0, i as u64) as usize;
        items.swap(i, j);
    }
}

fn checked(term: &'static str, t: &Tensor<f32>) -> Result<f64> {
    let value = t.item() as f64;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term, value })
    }
}

fn ensure_finite(term: &'static str, grads: &[Option<Vec<f32>>]) -> Result<()> {
    if grads.iter().flatten().flatten().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { term, value: f64::NAN })
    }
}

/// One alternating update on a batch: a discriminator step on detached
/// fakes, then a generator step on the total loss. The discriminator is
/// skipped (and reported as zero) when the adversarial weight is zero.
/// Nothing in `state` changes when an error is returned.
pub fn train_step(
    net: &Network,
    state: &mut TrainState,
    extractor: &FrozenFeatureExtractor,
    weights: &LossWeights,
    batch: &[&FrameRecord],
    rng: &mut Rng,
) -> Result<StepLosses> {
    let inputs = NetInputs::from_frames(batch, None)?;
    let target_ind = crate::network::stack_images(&batch.iter().map(|f| &f.l_ind).collect::<Vec<_>>(), None)?;
    let target = crate::numerics::ops::add(&inputs.l_d, &target_ind)?;

    let gen = state.generator.bind(true);
    let pred = net.predict_indirect(&gen, &inputs, Mode::Train, rng)?;
    let content = content_loss(&pred.l_ind, &target_ind)?;
    let mut losses = StepLosses {
        content: checked("content", &content)?,
        ..StepLosses::default()
    };
    let perceptual = if weights.perceptual > 0.0 {
        let lambdas = weights.lambdas(extractor.taps())?;
        perceptual_loss(&pred.l, &target, extractor, &lambdas)?
    } else {
        Tensor::scalar(0.0)
    };
    losses.perceptual = checked("perceptual", &perceptual)?;

    let mut disc_update = None;
    let adversarial = if weights.adversarial > 0.0 {
        let real_in = net.discriminator_input(&target_ind, &inputs.l_d, &inputs.r)?;
        let fake_in = net.discriminator_input(&pred.l_ind.detach(), &inputs.l_d, &inputs.r)?;
        let disc = state.discriminator.bind(true);
        let real = net.discriminator_forward(&disc, &real_in)?;
        let fake = net.discriminator_forward(&disc, &fake_in)?;
        let (loss_d, _) = adversarial_losses(&real, &fake)?;
        losses.discriminator = checked("discriminator", &loss_d)?;
        loss_d.backward()?;
        let grads = disc.grads();
        ensure_finite("discriminator", &grads)?;
        let mut params = state.discriminator.clone();
        let mut opt = state.discriminator_opt.clone();
        opt.step(&mut params, &grads)?;

        let updated = params.bind(false);
        let g_in = net.discriminator_input(&pred.l_ind, &inputs.l_d, &inputs.r)?;
        let loss_g = generator_adversarial_loss(&net.discriminator_forward(&updated, &g_in)?);
        disc_update = Some((params, opt));
        loss_g
    } else {
        Tensor::scalar(0.0)
    };
    losses.adversarial = checked("adversarial", &adversarial)?;

    let total = total_loss(&content, &perceptual, &adversarial, weights)?;
    checked("total", &total)?;
    total.backward()?;
    let grads = gen.grads();
    ensure_finite("generator", &grads)?;
    let mut params = state.generator.clone();
    let mut opt = state.generator_opt.clone();
    opt.step(&mut params, &grads)?;

    state.generator = params;
    state.generator_opt = opt;
    if let Some((params, opt)) = disc_update {
        state.discriminator = params;
        state.discriminator_opt = opt;
    }
    state.iteration += 1;
    Ok(losses)
}

/// Predicted buffers of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    pub s_ind: Image,
    pub l_ind: Image,
    pub l: Image,
}

fn to_image(t: &Tensor<f32>) -> Result<Image> {
    let s = t.shape();
    Image::from_data(s[3], s[2], s[1], t.to_vec())
}

/// Inference (dropout off) on each frame independently. Frames run in
/// parallel; results do not depend on the thread count.
pub fn predict_frames(net: &Network, generator: &ParamStore<f32>, frames: &[&FrameRecord]) -> Result<Vec<FramePrediction>> {
    let config = net.config().clone();
    map_indexed(frames.len(), |i| {
        let net = Network::new(config.clone())?;
        let inputs = NetInputs::from_frames(&frames[i..=i], None)?;
        // Eval mode never draws from the generator RNG.
        let Prediction { s_ind, l_ind, l } =
            net.predict_indirect(&generator.bind(false), &inputs, Mode::Eval, &mut Rng::new(0, 0))?;
        Ok(FramePrediction {
            s_ind: to_image(&s_ind)?,
            l_ind: to_image(&l_ind)?,
            l: to_image(&l)?,
        })
    })
    .into_iter()
    .collect()
}

/// Mean tone-mapped scores of the generator on `frames`.
pub fn evaluate_generator(net: &Network, generator: &ParamStore<f32>, frames: &[&FrameRecord]) -> Result<Scores> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predict_frames(net, generator, frames)?;
    let rows: Vec<Scores> = preds
        .iter()
        .zip(frames)
        .map(|(p, f)| Scores::compute(&p.l, &f.global()))
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    Ok(Scores {
        psnr: rows.iter().map(|s| s.psnr).sum::<f64>() / n,
        ssim: rows.iter().map(|s| s.ssim).sum::<f64>() / n,
        psnr_linear: rows.iter().map(|s| s.psnr_linear).sum::<f64>() / n,
    })
}

/// Content loss of the inference-mode prediction, averaged over `frames`.
/// Unlike step losses it carries no dropout noise, so it measures fit.
pub fn inference_content_loss(net: &Network, generator: &ParamStore<f32>, frames: &[&FrameRecord]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let config = net.config().clone();
    let values = map_indexed(frames.len(), |i| {
        let net = Network::new(config.clone())?;
        let inputs = NetInputs::from_frames(&frames[i..=i], None)?;
        let target = crate::network::stack_images(&[&frames[i].l_ind], None)?;
        let pred = net.predict_indirect(&generator.bind(false), &inputs, Mode::Eval, &mut Rng::new(0, 0))?;
        Ok(content_loss(&pred.l_ind, &target)?.item() as f64)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Held-out snapshot taken at an evaluation tick.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSnapshot {
    pub scores: Scores,
    /// Whether this snapshot set a new best PSNR.
    pub best: bool,
}

/// Metric log entry for one epoch.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    /// 1-based index of the completed epoch.
    pub epoch: u64,
    pub steps: Vec<StepLosses>,
    pub mean: StepLosses,
    pub eval: Option<EvalSnapshot>,
}

/// Run epochs `state.epoch + 1 ..= cfg.epochs`. `on_epoch` is called after
/// every epoch with the updated state, e.g. to write checkpoints; it sees
/// `eval.best` to keep the best model.
pub fn train_loop(
    net: &Network,
    train: &[&FrameRecord],
    held_out: &[&FrameRecord],
    cfg: &TrainConfig,
    extractor: &FrozenFeatureExtractor,
    state: &mut TrainState,
    mut on_epoch: impl FnMut(&TrainState, &EpochLog) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut log = Vec::new();
    while state.epoch < cfg.epochs as u64 {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle(&mut order, &mut Rng::derive(cfg.seed, &[0xE0C, epoch]));
        let [lo, hi] = cfg.alpha_range;
        let mut steps = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| {
                    let mut arng = Rng::derive(cfg.seed, &[0xA1F, epoch, i as u64]);
                    let alpha = libm::exp(arng.uniform(libm::log(lo), libm::log(hi))) as f32;
                    augment_exposure(train[i], if lo == hi { lo as f32 } else { alpha })
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&FrameRecord> = batch.iter().collect();
            let mut rng = Rng::derive(cfg.seed, &[0xD20, state.iteration]);
            steps.push(train_step(net, state, extractor, &cfg.weights, &refs, &mut rng)?);
        }
        state.epoch += 1;
        let eval = if cfg.eval_every > 0 && state.epoch % cfg.eval_every as u64 == 0 && !held_out.is_empty() {
            let scores = evaluate_generator(net, &state.generator, held_out)?;
            let best = scores.psnr > state.best_psnr;
            if best {
                state.best_psnr = scores.psnr;
            }
            Some(EvalSnapshot { scores, best })
        } else {
            None
        };
        let n = steps.len() as f64;
        let mean = StepLosses {
            content: steps.iter().map(|s| s.content).sum::<f64>() / n,
            perceptual: steps.iter().map(|s| s.perceptual).sum::<f64>() / n,
            adversarial: steps.iter().map(|s| s.adversarial).sum::<f64>() / n,
            discriminator: steps.iter().map(|s| s.discriminator).sum::<f64>() / n,
        };
        let entry = EpochLog {
            epoch: state.epoch,
            steps,
            mean,
            eval,
        };
        on_epoch(state, &entry)?;
        log.push(entry);
    }
    Ok(log)
}
