//! Training loops for the landmark generator and the diffusion model.

use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarMap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{RunConfig, TimestepSampling, TrainConfig};
use super::dataset::{landmark_batch, load_frame_clip, load_landmark_clip, LandmarkClip};
use super::manifest::{DatasetManifest, Split};
use super::models::{load_landmark_model, DiffusionModel};
use crate::checkpoint::{self, CheckpointKind, CheckpointMeta};
use crate::diffusion::{DiffusionSchedule, IdentityEncoder};
use crate::error::{validation, Error, Result};
use crate::exec::Exec;
use crate::frames::frames_to_tensor;
use crate::init::seeded_builder;
use crate::landmarks::{LandmarkConfig, LandmarkModel};
use crate::noise_guide::{apply_guided_noise, build_guidance, fields_tensor, guided_noise};

pub const LANDMARK_CHECKPOINT: &str = "landmarks.safetensors";
pub const DIFFUSION_CHECKPOINT: &str = "diffusion.safetensors";
pub const NAN_DUMP: &str = "nan_dump.json";

/// Cosine annealing from `max` at epoch 0 to `min` at the last epoch.
pub fn cosine_lr(epoch: usize, epochs: usize, max: f64, min: f64) -> f64 {
    if epochs <= 1 {
        return max;
    }
    let progress = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
    min + 0.5 * (max - min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Landmarks,
    Diffusion,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub stage: Stage,
    pub steps: usize,
    /// Loss of every optimizer step.
    pub losses: Vec<f32>,
    /// Learning rate used in each epoch.
    pub learning_rates: Vec<f64>,
    pub checkpoint: PathBuf,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f32> {
        self.losses.last().copied()
    }
}

pub(crate) fn gaussian(shape: &[usize], rng: &mut ChaCha8Rng, device: &Device) -> Result<Tensor> {
    let n = shape.iter().product();
    let v: Vec<f32> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(v, shape, device)?)
}

fn adam(vars: &VarMap, lr: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars.all_vars(),
        ParamsAdamW {
            lr,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?)
}

/// Batches of indices: reshuffled each pass, cycling as needed.
struct BatchOrder {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchOrder {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.reshuffle_if_done();
        s
    }

    fn reshuffle_if_done(&mut self) {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
    }

    fn next(&mut self, batch: usize) -> Vec<usize> {
        let batch = batch.min(self.order.len());
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            self.reshuffle_if_done();
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Serialize)]
struct NanDump<'a> {
    stage: Stage,
    epoch: usize,
    step: usize,
    learning_rate: f64,
    loss: String,
    clips: Vec<&'a str>,
    inputs: Vec<(&'static str, TensorSummary)>,
}

#[derive(Serialize)]
struct TensorSummary {
    shape: Vec<usize>,
    finite: bool,
    min: f32,
    max: f32,
}

fn summarize(t: &Tensor) -> Result<TensorSummary> {
    let v: Vec<f32> = t.flatten_all()?.to_vec1()?;
    Ok(TensorSummary {
        shape: t.dims().to_vec(),
        finite: v.iter().all(|x| x.is_finite()),
        min: v.iter().copied().fold(f32::INFINITY, f32::min),
        max: v.iter().copied().fold(f32::NEG_INFINITY, f32::max),
    })
}

fn abort_on_nan(run_dir: &Path, dump: NanDump) -> Error {
    let path = run_dir.join(NAN_DUMP);
    let text = serde_json::to_string_pretty(&dump).unwrap_or_default();
    let written = std::fs::write(&path, text).is_ok();
    Error::Diverged(format!(
        "{:?} loss became {} at epoch {} step {} (clips {:?}); batch dump {}",
        dump.stage,
        dump.loss,
        dump.epoch,
        dump.step,
        dump.clips,
        if written { path.display().to_string() } else { "could not be written".into() }
    ))
}

fn steps_per_epoch(train: &TrainConfig, n: usize) -> usize {
    train.steps_per_epoch.unwrap_or_else(|| n.div_ceil(train.batch_size))
}

fn save_epoch(
    vars: &VarMap,
    meta: &CheckpointMeta,
    run_dir: &Path,
    name: &str,
    keep: bool,
    epoch: usize,
) -> Result<PathBuf> {
    let latest = run_dir.join(name);
    checkpoint::save(&latest, vars, meta)?;
    if keep {
        let stem = name.trim_end_matches(".safetensors");
        checkpoint::save(run_dir.join(format!("{stem}_epoch{epoch:04}.safetensors")), vars, meta)?;
    }
    Ok(latest)
}

pub struct TrainedLandmarks {
    pub report: TrainReport,
    pub model: LandmarkModel,
    pub vars: VarMap,
}

/// Fits the landmark generator on in-memory clips with MSE and Adam.
pub fn fit_landmarks(
    clips: &[LandmarkClip],
    cfg: &LandmarkConfig,
    train: &TrainConfig,
    seed: u64,
    run_dir: &Path,
) -> Result<TrainedLandmarks> {
    if clips.is_empty() {
        return Err(validation!("no training clips"));
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let dev = Device::Cpu;
    let vars = VarMap::new();
    let model = LandmarkModel::new(cfg, seeded_builder(&vars, seed, &dev))?;
    let mut opt = adam(&vars, train.lr_max)?;
    let mut order = BatchOrder::new(clips.len(), seed ^ 0x5eed_0001);
    let per_epoch = steps_per_epoch(train, clips.len());
    let mut losses = Vec::new();
    let mut lrs = Vec::new();
    let mut ckpt = run_dir.join(LANDMARK_CHECKPOINT);
    for epoch in 0..train.epochs {
        let lr = cosine_lr(epoch, train.epochs, train.lr_max, train.lr_min);
        opt.set_learning_rate(lr);
        lrs.push(lr);
        for _ in 0..per_epoch {
            let idx = order.next(train.batch_size);
            let batch: Vec<&LandmarkClip> = idx.iter().map(|&i| &clips[i]).collect();
            let (x, v, target) = landmark_batch(&batch, &dev)?;
            let y = model.forward(&x, &v)?.coords;
            let loss = (y - &target)?.sqr()?.mean_all()?;
            let value = loss.to_scalar::<f32>()?;
            if !value.is_finite() {
                return Err(abort_on_nan(
                    run_dir,
                    NanDump {
                        stage: Stage::Landmarks,
                        epoch,
                        step: losses.len(),
                        learning_rate: lr,
                        loss: value.to_string(),
                        clips: batch.iter().map(|c| c.id.as_str()).collect(),
                        inputs: vec![("audio", summarize(&x)?), ("identity", summarize(&v)?), ("target", summarize(&target)?)],
                    },
                ));
            }
            opt.backward_step(&loss)?;
            losses.push(value);
        }
        let meta = CheckpointMeta::new(CheckpointKind::Landmarks, cfg, Some(epoch))?;
        ckpt = save_epoch(&vars, &meta, run_dir, LANDMARK_CHECKPOINT, train.keep_epoch_checkpoints, epoch)?;
        log::info!(
            "landmarks epoch {epoch}: lr {lr:.3e}, loss {:.6}",
            losses.last().copied().unwrap_or(f32::NAN)
        );
    }
    Ok(TrainedLandmarks {
        report: TrainReport {
            stage: Stage::Landmarks,
            steps: losses.len(),
            losses,
            learning_rates: lrs,
            checkpoint: ckpt,
        },
        model,
        vars,
    })
}

pub fn load_landmark_clips(manifest: &DatasetManifest, split: Split, cfg: &LandmarkConfig) -> Result<Vec<LandmarkClip>> {
    manifest
        .split(split)
        .into_iter()
        .map(|e| load_landmark_clip(manifest, e, cfg))
        .collect()
}

/// Stage 1 over the manifest's training split; writes a config snapshot
/// and a checkpoint per epoch into `run_dir`.
pub fn train_landmarks(manifest: &DatasetManifest, cfg: &RunConfig, run_dir: &Path) -> Result<TrainedLandmarks> {
    cfg.validate()?;
    cfg.write_snapshot(run_dir)?;
    let clips = load_landmark_clips(manifest, Split::Train, &cfg.landmarks)?;
    fit_landmarks(&clips, &cfg.landmarks, &cfg.train_landmarks, cfg.seed, run_dir)
}

/// One stage-2 training example, preprocessed.
struct DiffusionExample {
    id: String,
    x0: Tensor,
    identity: Tensor,
    w_e: Tensor,
    landmarks: crate::landmarks::LandmarkSequence,
}

pub struct TrainedDiffusion {
    pub report: TrainReport,
    pub model: DiffusionModel,
    pub vars: VarMap,
}

fn sample_timestep(mode: TimestepSampling, sched: &DiffusionSchedule, rng: &mut ChaCha8Rng) -> usize {
    match mode {
        TimestepSampling::Uniform => rng.random_range(0..sched.train_steps()),
        TimestepSampling::Inference => {
            let steps = sched.inference_steps();
            steps[rng.random_range(0..steps.len())]
        }
    }
}

/// Called after each epoch's checkpoint with the epoch index and the model;
/// returning `false` ends training early.
pub type EpochHook<'a> = &'a mut dyn FnMut(usize, &DiffusionModel) -> Result<bool>;

/// Stage 2, teacher-forced on ground-truth landmarks. Emotion vectors come
/// from the frozen stage-1 encoders in `landmark_checkpoint`.
pub fn train_diffusion(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    landmark_checkpoint: &Path,
    run_dir: &Path,
    exec: Exec,
) -> Result<TrainedDiffusion> {
    train_diffusion_with(manifest, cfg, landmark_checkpoint, run_dir, exec, &mut |_, _| Ok(true))
}

pub fn train_diffusion_with(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    landmark_checkpoint: &Path,
    run_dir: &Path,
    exec: Exec,
    hook: EpochHook,
) -> Result<TrainedDiffusion> {
    cfg.validate()?;
    cfg.write_snapshot(run_dir)?;
    let dev = Device::Cpu;
    let (lm_model, _) = load_landmark_model(landmark_checkpoint, Some(&cfg.landmarks), &dev)?;
    let size = cfg.diffusion.unet.image_size;
    let sched = cfg.diffusion.schedule()?;
    let train = &cfg.train_diffusion;

    let examples = manifest
        .split(Split::Train)
        .into_iter()
        .map(|e| {
            let c = load_frame_clip(manifest, e, &cfg.landmarks, size)?;
            let samples = Tensor::from_slice(&c.samples, (1, c.samples.len()), &dev)?;
            Ok(DiffusionExample {
                id: c.id,
                x0: frames_to_tensor(&[&c.frames], &dev)?,
                identity: IdentityEncoder::prepare(&[&c.identity], &dev)?,
                w_e: lm_model.emotion_embedding(&samples)?.detach(),
                landmarks: c.landmarks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    drop(lm_model);
    if examples.is_empty() {
        return Err(validation!("no training clips"));
    }

    let vars = VarMap::new();
    let model = DiffusionModel::new(&cfg.diffusion, seeded_builder(&vars, cfg.seed, &dev))?;
    let mut opt = adam(&vars, train.lr_max)?;
    let mut order = BatchOrder::new(examples.len(), cfg.seed ^ 0x5eed_0002);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0003);
    let per_epoch = steps_per_epoch(train, examples.len());
    let mut losses = Vec::new();
    let mut lrs = Vec::new();
    let mut ckpt = run_dir.join(DIFFUSION_CHECKPOINT);
    for epoch in 0..train.epochs {
        let lr = cosine_lr(epoch, train.epochs, train.lr_max, train.lr_min);
        opt.set_learning_rate(lr);
        lrs.push(lr);
        for _ in 0..per_epoch {
            let idx = order.next(train.batch_size);
            let batch: Vec<&DiffusionExample> = idx.iter().map(|&i| &examples[i]).collect();
            let x0 = Tensor::cat(&batch.iter().map(|e| &e.x0).collect::<Vec<_>>(), 0)?;
            let ids = Tensor::cat(&batch.iter().map(|e| &e.identity).collect::<Vec<_>>(), 0)?;
            let w_e = Tensor::cat(&batch.iter().map(|e| &e.w_e).collect::<Vec<_>>(), 0)?;
            let fields = batch
                .iter()
                .map(|e| {
                    let f = build_guidance(&e.landmarks, size, &cfg.guide, rng.random(), exec)?;
                    fields_tensor(&f, &dev)
                })
                .collect::<Result<Vec<_>>>()?;
            let fields = Tensor::stack(&fields, 0)?;
            let eps = gaussian(x0.dims(), &mut rng, &dev)?;
            let t = sample_timestep(cfg.diffusion.timestep_sampling, &sched, &mut rng);
            let x_t = apply_guided_noise(&x0, &fields, &eps, t, &sched)?;
            let cond = model.conditioning(&w_e, &ids)?;
            let pred = model.predict(&x_t, &vec![t; batch.len()], &cond)?;
            let loss = (pred - guided_noise(&fields, &eps)?)?.sqr()?.mean_all()?;
            let value = loss.to_scalar::<f32>()?;
            if !value.is_finite() {
                return Err(abort_on_nan(
                    run_dir,
                    NanDump {
                        stage: Stage::Diffusion,
                        epoch,
                        step: losses.len(),
                        learning_rate: lr,
                        loss: value.to_string(),
                        clips: batch.iter().map(|e| e.id.as_str()).collect(),
                        inputs: vec![("x_t", summarize(&x_t)?), ("w_e", summarize(&w_e)?), ("fields", summarize(&fields)?)],
                    },
                ));
            }
            opt.backward_step(&loss)?;
            losses.push(value);
        }
        let meta = CheckpointMeta::new(CheckpointKind::Diffusion, &cfg.diffusion, Some(epoch))?;
        ckpt = save_epoch(&vars, &meta, run_dir, DIFFUSION_CHECKPOINT, train.keep_epoch_checkpoints, epoch)?;
        log::info!(
            "diffusion epoch {epoch}: lr {lr:.3e}, loss {:.6}",
            losses.last().copied().unwrap_or(f32::NAN)
        );
        if !hook(epoch, &model)? {
            break;
        }
    }
    Ok(TrainedDiffusion {
        report: TrainReport {
            stage: Stage::Diffusion,
            steps: losses.len(),
            losses,
            learning_rates: lrs,
            checkpoint: ckpt,
        },
        model,
        vars,
    })
}
