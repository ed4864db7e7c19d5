use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ngi::commands::{self, Ablation, EvalArgs, InferArgs, TrainArgs};
use ngi::failure::classify;
use ngi::{FailureKind, ResultExt, RunConfig};

/// Neural screen-space indirect illumination: data generation, training,
/// inference and evaluation.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical failure, 1 anything else. `NGI_THREADS` caps the worker count.
#[derive(Parser)]
#[command(name = "ngi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset of procedurally generated rooms.
    GenData {
        /// JSON run configuration (defaults for missing keys).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides data.frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Overrides data.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the generator and discriminator on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Fit the first frame only, with dropout, augmentation and evaluation off.
        #[arg(long)]
        overfit_one: bool,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
        #[arg(long, value_enum)]
        ablate: Option<Ablation>,
    },
    /// Predict indirect illumination for one frame.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        frame_id: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint and both baselines on held-out frames.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Require the checkpoint to be this ablated variant.
        #[arg(long, value_enum)]
        ablate: Option<Ablation>,
        /// Score every frame (for a dataset disjoint from training).
        #[arg(long)]
        all_frames: bool,
    },
    /// Finite-difference check of every differentiable op and network block.
    Gradcheck {
        /// Write the per-case results as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Add a deliberately wrong backward rule (negative control).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn load_config(path: Option<PathBuf>) -> anyhow::Result<RunConfig> {
    RunConfig::load(path.as_deref()).or_fail(FailureKind::Config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    commands::configure_threads()?;
    match cli.command {
        Command::GenData {
            config,
            out,
            frames,
            seed,
        } => {
            let mut cfg = load_config(config)?;
            if let Some(n) = frames {
                cfg.data.frames = n;
            }
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            commands::gen_data(&cfg, &out)?;
        }
        Command::Train {
            data,
            out,
            config,
            epochs,
            overfit_one,
            resume,
            ablate,
        } => {
            let mut cfg = load_config(config)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(a) = ablate {
                a.apply(&mut cfg.model, &mut cfg.train);
            }
            let log = commands::train(&TrainArgs {
                data,
                out,
                config: cfg,
                overfit_one,
                resume,
            })?;
            if let Some(o) = log.overfit {
                eprintln!(
                    "overfit: content loss {:.6} -> {:.6} ({:.1}% drop)",
                    o.initial_content,
                    o.final_content,
                    100.0 * o.drop
                );
            }
        }
        Command::Infer {
            ckpt,
            frame_id,
            data,
            out,
        } => {
            let (_, elapsed) = commands::infer(&InferArgs {
                ckpt,
                data,
                frame_id,
                out,
            })?;
            eprintln!("inference: {:.1} ms", elapsed.as_secs_f64() * 1e3);
        }
        Command::Eval {
            ckpt,
            data,
            report,
            ablate,
            all_frames,
        } => {
            let r = commands::eval(&EvalArgs {
                ckpt,
                data,
                report,
                ablate,
                all_frames,
            })?;
            for (name, s) in [("model", r.mean_model), ("ambient", r.mean_ambient), ("direct", r.mean_direct)] {
                println!("{name:<8} psnr {:6.2} dB  ssim {:.4}", s.psnr, s.ssim);
            }
        }
        Command::Gradcheck { report, inject_fault } => {
            let rows = commands::gradcheck(inject_fault)?;
            for r in &rows {
                println!(
                    "{} {:<28} {:<6} max rel err {:.2e} (tol {:.0e}){}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.precision,
                    r.max_rel_err,
                    r.tolerance,
                    if r.failures.is_empty() {
                        String::new()
                    } else {
                        format!(" [{}]", r.failures.join(", "))
                    }
                );
            }
            if let Some(path) = report {
                let bytes = serde_json::to_vec_pretty(&rows)?;
                std::fs::write(&path, bytes).or_fail(FailureKind::Data)?;
            }
            if let Some(e) = commands::gradcheck_failure(&rows) {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e).map_or(1, FailureKind::exit_code))
        }
    }
}
