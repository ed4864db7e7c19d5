//! The five commands. Each returns the artifact it wrote so tests can
//! inspect it without re-reading files; `main` only parses flags and maps
//! errors to exit codes.
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use ngi_core::gradsuite::{run_gradient_suite, Precision, SuiteOptions};
use ngi_core::metrics::{ambient_constant, evaluate, tone_map, EvalReport};
use ngi_core::network::{ModelConfig, Network};
use ngi_core::scenegen::{
    build_random_scene, filter_viewpoint, render_frame, sample_camera, FrameRecord, Image, ViewStats,
};
use ngi_core::trainer::{inference_content_loss, predict_frames, split_indices, train_loop, EpochLog, TrainConfig, TrainState};
use ngi_core::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{DataConfig, RunConfig};
use crate::dataset::{self, Dataset, Manifest, DATASET_VERSION};
use crate::failure::{FailureKind, ResultExt};
use crate::fsutil::write_atomic;
use crate::pfm;

pub const CHECKPOINT_FILE: &str = "checkpoint.ngi";
pub const BEST_FILE: &str = "best.ngi";
pub const METRICS_FILE: &str = "metrics.json";
pub const INFER_FILE: &str = "infer.json";

/// Model variants with one component removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Convolution-only bottleneck (no geometry-aware attention).
    NoGfa,
    /// Adversarial loss weight set to zero.
    NoAdversarial,
    /// Perceptual loss weight set to zero.
    NoPerceptual,
}

impl Ablation {
    pub fn apply(self, model: &mut ModelConfig, train: &mut TrainConfig) {
        match self {
            Ablation::NoGfa => model.use_gfa = false,
            Ablation::NoAdversarial => train.weights.adversarial = 0.0,
            Ablation::NoPerceptual => train.weights.perceptual = 0.0,
        }
    }

    pub fn holds(self, model: &ModelConfig, train: &TrainConfig) -> bool {
        match self {
            Ablation::NoGfa => !model.use_gfa,
            Ablation::NoAdversarial => train.weights.adversarial == 0.0,
            Ablation::NoPerceptual => train.weights.perceptual == 0.0,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
        .with_context(|| format!("writing {}", path.display()))
        .or_fail(FailureKind::Data)
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .or_fail(FailureKind::Data)
}

// ---------------------------------------------------------------- gen-data

/// No viewpoint of a frame passed the filter.
#[derive(Debug, thiserror::Error)]
#[error(
    "frame {frame}: no acceptable viewpoint in {attempts} attempts (last probe: mean depth {:.3} m, \
     depth variance {:.4} m^2, dark fraction {:.3})",
    last.mean_depth, last.depth_var, last.dark_fraction
)]
pub struct UnreachableAcceptance {
    pub frame: usize,
    pub attempts: usize,
    pub last: ViewStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub frames: usize,
    pub viewpoints_tried: u64,
    pub viewpoints_rejected: u64,
}

impl GenerationStats {
    pub fn rejection_rate(&self) -> f64 {
        if self.viewpoints_tried == 0 {
            0.0
        } else {
            self.viewpoints_rejected as f64 / self.viewpoints_tried as f64
        }
    }
}

/// Generation fails when more than this fraction of viewpoints is rejected.
pub const MAX_REJECTION_RATE: f64 = 0.99;

pub fn frame_id(i: usize) -> String {
    format!("frame{i:05}")
}

/// Scene, camera and render seeds of frame `i` depend only on `(seed, i)`,
/// so frames can be rendered in any order.
pub fn render_dataset_frame(d: &DataConfig, i: usize) -> Result<(FrameRecord, usize), UnreachableAcceptance> {
    let mut cam_rng = Rng::derive(d.seed, &[0xCA3, i as u64]);
    let mut scene = None;
    let mut last = None;
    for attempt in 0..d.max_view_attempts {
        if attempt % d.views_per_scene == 0 {
            let scene_seed = Rng::derive(d.seed, &[0x5CE, i as u64, (attempt / d.views_per_scene) as u64]).next_u64();
            scene = Some((scene_seed, build_random_scene(scene_seed, &d.scenes)));
        }
        let (scene_seed, sc) = scene.as_ref().expect("scene drawn on first attempt");
        let camera = sample_camera(sc, &mut cam_rng, d.vfov_deg, d.width, d.height);
        let stats = filter_viewpoint(&camera, sc, &d.filter);
        if stats.accepted {
            let render_seed = Rng::derive(d.seed, &[0x4E5, i as u64]).next_u64();
            let mut frame = render_frame(sc, &camera, &d.render, render_seed).expect("accepted camera has a basis");
            frame.scene_seed = *scene_seed;
            return Ok((frame, attempt));
        }
        last = Some(stats);
    }
    Err(UnreachableAcceptance {
        frame: i,
        attempts: d.max_view_attempts,
        last: last.expect("at least one attempt"),
    })
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> anyhow::Result<GenerationStats> {
    cfg.validate().or_fail(FailureKind::Config)?;
    let d = &cfg.data;
    create_dir(out)?;
    let rendered: Vec<(FrameRecord, usize)> = (0..d.frames)
        .into_par_iter()
        .map(|i| render_dataset_frame(d, i))
        .collect::<Result<_, _>>()
        .or_fail(FailureKind::Config)?;
    let rejected: u64 = rendered.iter().map(|(_, r)| *r as u64).sum();
    let stats = GenerationStats {
        frames: d.frames,
        viewpoints_tried: rejected + d.frames as u64,
        viewpoints_rejected: rejected,
    };
    eprintln!(
        "gen-data: {} frames, {} of {} viewpoints rejected ({:.1}%)",
        stats.frames,
        stats.viewpoints_rejected,
        stats.viewpoints_tried,
        100.0 * stats.rejection_rate()
    );
    if stats.rejection_rate() > MAX_REJECTION_RATE {
        return Err(anyhow!(
            "viewpoint rejection rate {:.4} exceeds {MAX_REJECTION_RATE}: {} of {} rejected",
            stats.rejection_rate(),
            stats.viewpoints_rejected,
            stats.viewpoints_tried
        ))
        .or_fail(FailureKind::Config);
    }
    let frames = rendered
        .par_iter()
        .enumerate()
        .map(|(i, (f, _))| dataset::write_frame(out, &frame_id(i), f))
        .collect::<Result<Vec<_>, _>>()
        .or_fail(FailureKind::Data)?;
    let manifest = Manifest {
        version: DATASET_VERSION,
        width: d.width,
        height: d.height,
        generation: serde_json::json!({ "config": cfg.echo(), "stats": stats }),
        frames,
    };
    dataset::write_manifest(out, &manifest).or_fail(FailureKind::Data)?;
    Ok(stats)
}

// ------------------------------------------------------------------- train

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: RunConfig,
    /// Fit the first frame only, without augmentation or evaluation.
    pub overfit_one: bool,
    /// Continue from `out/checkpoint.ngi` when it exists.
    pub resume: bool,
}

/// Inference-mode content loss before and after an overfit run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverfitSummary {
    pub initial_content: f64,
    pub final_content: f64,
    /// `1 - final / initial`.
    pub drop: f64,
}

/// `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub config: RunConfig,
    pub dataset_hash: String,
    pub overfit_one: bool,
    pub train_ids: Vec<String>,
    pub held_out_ids: Vec<String>,
    pub epochs: Vec<EpochLog>,
    pub overfit: Option<OverfitSummary>,
}

/// Training configuration with the epoch count cleared, for comparing a
/// checkpoint against the run that resumes it.
fn resumable(t: &TrainConfig) -> TrainConfig {
    TrainConfig { epochs: 0, ..t.clone() }
}

pub fn train(args: &TrainArgs) -> anyhow::Result<MetricLog> {
    let mut config = args.config.clone();
    if args.overfit_one {
        // Memorization check: every regularizer is off.
        config.model.dropout = 0.0;
        config.train.alpha_range = [1.0, 1.0];
        config.train.batch_size = 1;
        config.train.held_out = 0;
        config.train.eval_every = 0;
    }
    config.validate().or_fail(FailureKind::Config)?;
    let ds = Dataset::load(&args.data).or_fail(FailureKind::Data)?;
    let model = &config.model;
    if ds.resolution() != (model.width, model.height) {
        bail_config(format!(
            "dataset resolution {}x{} does not match model resolution {}x{}",
            ds.resolution().0,
            ds.resolution().1,
            model.width,
            model.height
        ))?;
    }
    let net = Network::new(model.clone()).or_fail(FailureKind::Config)?;
    let ids = ds.ids();
    let (train_ids, held_out_ids): (Vec<&str>, Vec<&str>) = if args.overfit_one {
        (ids.iter().take(1).copied().collect(), Vec::new())
    } else {
        let (a, b) = split_indices(ids.len(), config.train.held_out, config.train.split_seed);
        (a.iter().map(|&i| ids[i]).collect(), b.iter().map(|&i| ids[i]).collect())
    };
    let train_frames = ds.frames(&train_ids).or_fail(FailureKind::Data)?;
    let held_frames = ds.frames(&held_out_ids).or_fail(FailureKind::Data)?;
    let train_refs: Vec<&FrameRecord> = train_frames.iter().collect();
    let held_refs: Vec<&FrameRecord> = held_frames.iter().collect();

    create_dir(&args.out)?;
    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    let metrics_path = args.out.join(METRICS_FILE);
    let mut log = MetricLog {
        config: config.clone(),
        dataset_hash: ds.content_hash(),
        overfit_one: args.overfit_one,
        train_ids: train_ids.iter().map(|s| s.to_string()).collect(),
        held_out_ids: held_out_ids.iter().map(|s| s.to_string()).collect(),
        epochs: Vec::new(),
        overfit: None,
    };

    let fresh = TrainState::new(&net, &config.train);
    let mut state = if args.resume && ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path).or_fail(FailureKind::Data)?;
        if ckpt.model != config.model || resumable(&ckpt.train) != resumable(&config.train) {
            bail_config(format!("{} was written with a different configuration", ckpt_path.display()))?;
        }
        if let Ok(bytes) = fs::read(&metrics_path) {
            let previous: MetricLog = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", metrics_path.display()))
                .or_fail(FailureKind::Data)?;
            if previous.dataset_hash != log.dataset_hash {
                bail_config("resumed run uses a different dataset".into())?;
            }
            log.epochs = previous.epochs.into_iter().filter(|e| e.epoch <= ckpt.state.epoch).collect();
        }
        ckpt.state
    } else {
        let state = fresh.clone();
        Checkpoint::new(config.model.clone(), config.train.clone(), state.clone())
            .save(&ckpt_path)
            .or_fail(FailureKind::Data)?;
        state
    };
    write_json(&metrics_path, &log)?;

    let extractor = config.train.extractor();
    let mut io_error = None;
    let best_path = args.out.join(BEST_FILE);
    let result = train_loop(&net, &train_refs, &held_refs, &config.train, &extractor, &mut state, |s, entry| {
        let ckpt = Checkpoint::new(config.model.clone(), config.train.clone(), s.clone());
        let saved = ckpt.save(&ckpt_path).map_err(anyhow::Error::from).and_then(|_| {
            if entry.eval.is_some_and(|e| e.best) {
                ckpt.save(&best_path)?;
            }
            log.epochs.push(entry.clone());
            write_json(&metrics_path, &log)
        });
        saved.map_err(|e| {
            let msg = format!("{e:#}");
            io_error = Some(e);
            ngi_core::Error::Checkpoint(msg)
        })
    });
    if let Some(e) = io_error {
        return Err(e).or_fail(FailureKind::Data);
    }
    result.or_fail(FailureKind::Numerical)?;

    if args.overfit_one && !train_refs.is_empty() {
        let initial = inference_content_loss(&net, &fresh.generator, &train_refs).or_fail(FailureKind::Numerical)?;
        let final_ = inference_content_loss(&net, &state.generator, &train_refs).or_fail(FailureKind::Numerical)?;
        log.overfit = Some(OverfitSummary {
            initial_content: initial,
            final_content: final_,
            drop: 1.0 - final_ / initial,
        });
        write_json(&metrics_path, &log)?;
    }
    Ok(log)
}

fn bail_config(msg: String) -> anyhow::Result<()> {
    Err(anyhow!(msg)).or_fail(FailureKind::Config)
}

// ------------------------------------------------------------------- infer

#[derive(Clone, Debug)]
pub struct InferArgs {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub frame_id: String,
    pub out: PathBuf,
}

/// `infer.json`. Wall-clock time is logged, not recorded, to keep the file reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferReport {
    pub frame_id: String,
    pub dataset_hash: String,
    pub checkpoint_sha256: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub outputs: Vec<String>,
}

fn load_checkpoint(path: &Path) -> anyhow::Result<(Checkpoint, String)> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_fail(FailureKind::Data)?;
    let ckpt = Checkpoint::from_bytes(&bytes)
        .with_context(|| format!("loading {}", path.display()))
        .or_fail(FailureKind::Data)?;
    Ok((ckpt, sha256_hex(&bytes)))
}

fn check_resolution(ckpt: &Checkpoint, ds: &Dataset) -> anyhow::Result<()> {
    let (w, h) = ds.resolution();
    if (ckpt.model.width, ckpt.model.height) != (w, h) {
        return Err(anyhow!(
            "checkpoint resolution {}x{} does not match dataset resolution {w}x{h}",
            ckpt.model.width,
            ckpt.model.height
        ))
        .or_fail(FailureKind::Data);
    }
    Ok(())
}

/// 8-bit sRGB-like preview of a radiance image.
pub fn preview_png(img: &Image) -> anyhow::Result<Vec<u8>> {
    let mapped = tone_map(img)?;
    let (w, h) = (img.width, img.height);
    let mut rgb = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = std::array::from_fn(|c| {
                let v = mapped.get(c.min(img.channels - 1), y, x);
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            });
            rgb.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    let mut bytes = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    Ok(bytes)
}

pub fn infer(args: &InferArgs) -> anyhow::Result<(InferReport, Duration)> {
    let (ckpt, ckpt_hash) = load_checkpoint(&args.ckpt)?;
    let ds = Dataset::load(&args.data).or_fail(FailureKind::Data)?;
    check_resolution(&ckpt, &ds)?;
    let frame = ds.frame(&args.frame_id).or_fail(FailureKind::Data)?;
    let net = ckpt.network().or_fail(FailureKind::Config)?;
    let start = Instant::now();
    let pred = predict_frames(&net, &ckpt.state.generator, &[&frame])
        .or_fail(FailureKind::Numerical)?
        .remove(0);
    let elapsed = start.elapsed();
    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    for (name, img) in [("s_ind.pfm", &pred.s_ind), ("l_ind.pfm", &pred.l_ind), ("l.pfm", &pred.l)] {
        let bytes = pfm::encode(img).or_fail(FailureKind::Numerical)?;
        write_atomic(&args.out.join(name), &bytes).or_fail(FailureKind::Data)?;
        outputs.push(name.to_string());
    }
    let png = preview_png(&pred.l).or_fail(FailureKind::Numerical)?;
    write_atomic(&args.out.join("preview.png"), &png).or_fail(FailureKind::Data)?;
    outputs.push("preview.png".into());
    let report = InferReport {
        frame_id: args.frame_id.clone(),
        dataset_hash: ds.content_hash(),
        checkpoint_sha256: ckpt_hash,
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        outputs,
    };
    write_json(&args.out.join(INFER_FILE), &report)?;
    Ok((report, elapsed))
}

// -------------------------------------------------------------------- eval

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub report: PathBuf,
    /// Require the checkpoint to be this ablated variant.
    pub ablate: Option<Ablation>,
    /// Score every frame instead of the checkpoint's held-out split (for
    /// datasets disjoint from training). The ambient constant then comes
    /// from the same frames.
    pub all_frames: bool,
}

/// Configuration echo of an evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub checkpoint_sha256: String,
    pub ablation: Option<Ablation>,
    pub all_frames: bool,
    /// Frames the ambient constant was estimated on.
    pub ambient_frames: usize,
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<EvalReport<EvalEcho>> {
    let (ckpt, ckpt_hash) = load_checkpoint(&args.ckpt)?;
    if let Some(a) = args.ablate {
        if !a.holds(&ckpt.model, &ckpt.train) {
            bail_config(format!("{} is not a {a:?} model", args.ckpt.display()))?;
        }
    }
    let ds = Dataset::load(&args.data).or_fail(FailureKind::Data)?;
    check_resolution(&ckpt, &ds)?;
    let ids = ds.ids();
    let (ambient_ids, test_ids): (Vec<&str>, Vec<&str>) = if args.all_frames {
        (ids.clone(), ids.clone())
    } else {
        let (a, b) = split_indices(ids.len(), ckpt.train.held_out, ckpt.train.split_seed);
        (a.iter().map(|&i| ids[i]).collect(), b.iter().map(|&i| ids[i]).collect())
    };
    if test_ids.is_empty() {
        return Err(anyhow!("no frames to evaluate")).or_fail(FailureKind::Data);
    }
    let ambient_k = {
        let frames = ds.frames(&ambient_ids).or_fail(FailureKind::Data)?;
        ambient_constant(&frames.iter().collect::<Vec<_>>()).or_fail(FailureKind::Data)?
    };
    let test = ds.frames(&test_ids).or_fail(FailureKind::Data)?;
    let refs: Vec<&FrameRecord> = test.iter().collect();
    let net = ckpt.network().or_fail(FailureKind::Config)?;
    let preds = predict_frames(&net, &ckpt.state.generator, &refs).or_fail(FailureKind::Numerical)?;
    let images: Vec<Image> = preds.into_iter().map(|p| p.l).collect();
    let rows: Vec<(&str, &FrameRecord)> = test_ids.iter().copied().zip(refs.iter().copied()).collect();
    let echo = EvalEcho {
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        checkpoint_sha256: ckpt_hash,
        ablation: args.ablate,
        all_frames: args.all_frames,
        ambient_frames: ambient_ids.len(),
    };
    let report = evaluate(&rows, &images, ambient_k, ds.content_hash(), echo).or_fail(FailureKind::Numerical)?;
    if let Some(dir) = args.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(&args.report, &report)?;
    Ok(report)
}

// --------------------------------------------------------------- gradcheck

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub name: String,
    pub precision: String,
    pub passed: bool,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Inputs whose gradients disagreed.
    pub failures: Vec<String>,
}

/// The 64-bit suite over every op and network block, then the same cases
/// with 32-bit backward rules.
pub fn gradcheck(inject_fault: bool) -> anyhow::Result<Vec<GradcheckRow>> {
    let mut rows = Vec::new();
    for precision in [Precision::Double, Precision::Single] {
        let opts = SuiteOptions {
            precision,
            inject_fault,
            ..SuiteOptions::default()
        };
        for case in run_gradient_suite(&opts).or_fail(FailureKind::Numerical)? {
            rows.push(GradcheckRow {
                precision: format!("{precision:?}").to_lowercase(),
                passed: case.report.passed(),
                max_rel_err: case.report.max_rel_err(),
                tolerance: case.report.tolerance,
                failures: case.report.failures().into_iter().map(String::from).collect(),
                name: case.name,
            });
        }
    }
    Ok(rows)
}

/// Error for a failed gradient suite, naming the failing cases.
pub fn gradcheck_failure(rows: &[GradcheckRow]) -> Option<anyhow::Error> {
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({})", r.name, r.precision))
        .collect();
    if failed.is_empty() {
        None
    } else {
        Some(
            Err::<(), _>(anyhow!("gradient check failed: {}", failed.join(", ")))
                .or_fail(FailureKind::Numerical)
                .unwrap_err(),
        )
    }
}

/// Size the global worker pool from `NGI_THREADS` (unset or 0: all cores).
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("NGI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| anyhow!("NGI_THREADS must be a non-negative integer, got `{v}`"))
        .or_fail(FailureKind::Config)?;
    if n > 0 {
        // Only the first call takes effect; later calls keep the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
