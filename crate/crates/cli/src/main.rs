use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use atl_diff::landmarks::LandmarkSequence;
use atl_diff::pipeline::{
    ablate, evaluate_dirs, gen_landmarks, infer, ingest, render_masks, train_diffusion, train_landmarks,
    write_synthetic_dataset, DatasetManifest, EvalRequest, Ffmpeg, InferRequest, RunConfig, TimingRecord,
    LANDMARK_CHECKPOINT, DIFFUSION_CHECKPOINT,
};
use atl_diff::Exec;

#[derive(Parser)]
#[command(name = "atldiff", version, about = "Audio-driven talking-head generation")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run per-frame work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    Config,
    /// Write a procedural dataset in the raw layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        seconds: usize,
    },
    /// Cut raw samples into one-second clips and write the manifest.
    Ingest {
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// ffmpeg executable for samples that ship a video file.
        #[arg(long, default_value = "ffmpeg")]
        ffmpeg: PathBuf,
    },
    /// Train the landmark generator.
    TrainLandmarks {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Train the diffusion model on ground-truth landmarks.
    TrainDiffusion {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Landmark checkpoint supplying emotion vectors.
        #[arg(long)]
        landmarks: Option<PathBuf>,
    },
    /// Generate frames for an audio file and an identity image.
    Infer {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        identity: PathBuf,
        /// One-frame landmarks of the identity image.
        #[arg(long)]
        identity_landmarks: PathBuf,
        #[arg(long)]
        landmarks_ckpt: Option<PathBuf>,
        #[arg(long)]
        diffusion_ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted frames against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Predicted landmarks; requires --gt-landmarks.
        #[arg(long, requires = "gt_landmarks")]
        landmarks: Option<PathBuf>,
        #[arg(long)]
        gt_landmarks: Option<PathBuf>,
        #[arg(long)]
        fid: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score landmark-generator variants.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Overrides the configured variant list.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Write guide masks and noise fields for a landmark file.
    RenderMask {
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Predict a landmark trajectory from audio.
    GenLandmarks {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        identity_landmarks: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env(|k| std::env::var_os(k));
            c.validate()?;
            c
        }
    };
    Ok(cfg)
}

fn manifest_path(arg: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    arg.unwrap_or_else(|| cfg.paths.data_root.clone())
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf> {
    if !path.exists() {
        bail!("{what} not found at {}", path.display());
    }
    Ok(path)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(cli.config.as_deref())?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };

    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()?),
        Command::Synth { out, count, seconds } => {
            write_synthetic_dataset(&out, count, seconds, cfg.data.image_size, cfg.seed)?;
            log::info!("wrote {count} samples to {}", out.display());
        }
        Command::Ingest { raw, out, ffmpeg } => {
            let raw = raw.unwrap_or_else(|| cfg.paths.raw_root.clone());
            let out = out.unwrap_or_else(|| cfg.paths.data_root.clone());
            let decoder = Ffmpeg { program: ffmpeg };
            let m = ingest(&raw, &out, &cfg, Some(&decoder), exec)?;
            log::info!(
                "{} clips from {} samples ({} skipped)",
                m.header.clips,
                m.header.samples,
                m.header.skipped.len()
            );
        }
        Command::TrainLandmarks { manifest, run_dir } => {
            let m = DatasetManifest::load(manifest_path(manifest, &cfg))?;
            let dir = run_dir.unwrap_or_else(|| cfg.paths.run_dir.clone());
            let t = train_landmarks(&m, &cfg, &dir)?;
            log::info!("checkpoint {}", t.report.checkpoint.display());
        }
        Command::TrainDiffusion {
            manifest,
            run_dir,
            landmarks,
        } => {
            let m = DatasetManifest::load(manifest_path(manifest, &cfg))?;
            let dir = run_dir.unwrap_or_else(|| cfg.paths.run_dir.clone());
            let lm = existing(landmarks.unwrap_or_else(|| dir.join(LANDMARK_CHECKPOINT)), "landmark checkpoint")?;
            let t = train_diffusion(&m, &cfg, &lm, &dir, exec)?;
            log::info!("checkpoint {}", t.report.checkpoint.display());
        }
        Command::Infer {
            audio,
            identity,
            identity_landmarks,
            landmarks_ckpt,
            diffusion_ckpt,
            out,
        } => {
            let run = &cfg.paths.run_dir;
            let lm = existing(landmarks_ckpt.unwrap_or_else(|| run.join(LANDMARK_CHECKPOINT)), "landmark checkpoint")?;
            let df = existing(diffusion_ckpt.unwrap_or_else(|| run.join(DIFFUSION_CHECKPOINT)), "diffusion checkpoint")?;
            let (_, timing) = infer(
                &InferRequest {
                    audio: &audio,
                    identity_image: &identity,
                    identity_landmarks: &identity_landmarks,
                    landmark_checkpoint: &lm,
                    diffusion_checkpoint: &df,
                    out_dir: &out,
                },
                &cfg,
                exec,
            )?;
            println!("{}\n{}", TimingRecord::TABLE_HEADER, timing.table_row());
        }
        Command::Evaluate {
            pred,
            gt,
            landmarks,
            gt_landmarks,
            fid,
            out,
        } => {
            let lms = landmarks.as_deref().zip(gt_landmarks.as_deref());
            let report = evaluate_dirs(
                &EvalRequest {
                    pred_frames: &pred,
                    gt_frames: &gt,
                    landmarks: lms,
                    fid,
                    out_dir: out.as_deref(),
                },
                exec,
            )?;
            print_json(&report)?;
        }
        Command::Ablate {
            manifest,
            run_dir,
            variants,
        } => {
            if !variants.is_empty() {
                cfg.ablation.variants = variants;
            }
            let m = DatasetManifest::load(manifest_path(manifest, &cfg))?;
            let dir = run_dir.unwrap_or_else(|| cfg.paths.run_dir.join("ablation"));
            let table = ablate(&m, &cfg, &dir)?;
            print!("{}", table.to_csv());
        }
        Command::RenderMask { landmarks, out, size } => {
            let seq = LandmarkSequence::load(&landmarks).with_context(|| format!("reading {}", landmarks.display()))?;
            let size = size.unwrap_or(cfg.data.image_size);
            let summary = render_masks(&seq, size, &cfg.guide, cfg.seed, &out, exec)?;
            print_json(&summary)?;
        }
        Command::GenLandmarks {
            audio,
            identity_landmarks,
            ckpt,
            out,
        } => {
            let ckpt = existing(ckpt.unwrap_or_else(|| cfg.paths.run_dir.join(LANDMARK_CHECKPOINT)), "landmark checkpoint")?;
            let seq = gen_landmarks(&audio, &identity_landmarks, &ckpt, Some(&cfg.landmarks), &out)?;
            log::info!("wrote {} frames to {}", seq.frames(), out.display());
        }
    }
    Ok(())
}
