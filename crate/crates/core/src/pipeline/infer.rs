//! Audio + identity image to video frames.

use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::FrameClip;
use super::models::{load_diffusion_model, load_landmark_model, DiffusionModel};
use super::train::gaussian;
use crate::audio::{load_audio, segment_clips, AudioClip};
use crate::diffusion::{denoise_sequence, DiffusionSchedule, IdentityEncoder};
use crate::error::{validation, Error, Result};
use crate::exec::Exec;
use crate::frames::{frames_to_tensor, tensor_to_frames, write_frame_dir, RgbFrame};
use crate::landmarks::{generate_landmarks, LandmarkModel, LandmarkSequence};
use crate::noise_guide::{apply_guided_noise, build_guidance, fields_tensor, GuideConfig};
use crate::{FRAMES_PER_CLIP, SAMPLES_PER_CLIP};

pub const TIMING_FILE: &str = "timing.json";
pub const LANDMARKS_FILE: &str = "landmarks.json";
pub const FRAMES_DIR: &str = "frames";

/// Wall-clock cost of one inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub clips: usize,
    pub frames: usize,
    pub steps: usize,
    pub wall_seconds: f64,
    pub seconds_per_clip: f64,
    pub fps: f64,
}

impl TimingRecord {
    pub fn new(clips: usize, frames: usize, steps: usize, wall_seconds: f64) -> Self {
        Self {
            clips,
            frames,
            steps,
            wall_seconds,
            seconds_per_clip: wall_seconds / clips.max(1) as f64,
            fps: frames as f64 / wall_seconds.max(f64::MIN_POSITIVE),
        }
    }

    pub const TABLE_HEADER: &'static str = "| Method | Steps | s / clip | FPS |\n|---|---|---|---|";

    pub fn table_row(&self) -> String {
        format!(
            "| Ours (step = {}) | {} | {:.3} | {:.3} |",
            self.steps, self.steps, self.seconds_per_clip, self.fps
        )
    }
}

/// Frames of each clip that correspond to real audio: full clips keep all
/// of them, a zero-padded tail keeps its share rounded up.
pub fn valid_frames(clip: &AudioClip) -> usize {
    (clip.valid_samples * FRAMES_PER_CLIP).div_ceil(SAMPLES_PER_CLIP).clamp(1, FRAMES_PER_CLIP)
}

/// Denoises a batch of clips. Every clip starts from its identity frame
/// repeated over time, noised at the largest inference step with its
/// landmark-guided field. `seeds[b]` drives both `η` and `ε` of clip `b`.
pub fn synthesize(
    model: &DiffusionModel,
    sched: &DiffusionSchedule,
    guide: &GuideConfig,
    landmarks: &[&LandmarkSequence],
    identity: &[&RgbFrame],
    w_e: &Tensor,
    seeds: &[u64],
    exec: Exec,
    device: &Device,
) -> Result<Vec<Vec<RgbFrame>>> {
    let b = landmarks.len();
    if identity.len() != b || seeds.len() != b || w_e.dim(0)? != b {
        return Err(validation!("synthesize needs one identity, seed and emotion vector per clip"));
    }
    let size = model.unet.config().image_size;
    let stills: Vec<Vec<RgbFrame>> = identity
        .iter()
        .zip(landmarks)
        .map(|(img, lm)| vec![img.resized(size); lm.frames()])
        .collect();
    let still_refs: Vec<&[RgbFrame]> = stills.iter().map(|s| s.as_slice()).collect();
    let x0 = frames_to_tensor(&still_refs, device)?;
    let mut fields = Vec::with_capacity(b);
    let mut eps = Vec::with_capacity(b);
    for ((lm, &seed), still) in landmarks.iter().zip(seeds).zip(&stills) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fields.push(fields_tensor(&build_guidance(lm, size, guide, seed, exec)?, device)?);
        eps.push(gaussian(&[still.len(), size, size, 3], &mut rng, device)?);
    }
    let fields = Tensor::stack(&fields, 0)?;
    let eps = Tensor::stack(&eps, 0)?;
    let x_t = apply_guided_noise(&x0, &fields, &eps, sched.largest_inference_step(), sched)?;
    let ids = IdentityEncoder::prepare(identity, device)?;
    let cond = model.conditioning(w_e, &ids)?;
    let unit = denoise_sequence(&x_t, &cond, sched, model)?;
    tensor_to_frames(&((unit * 2.0)? - 1.0)?)
}

/// Mean absolute per-pixel error of frames synthesized from ground-truth
/// landmarks against the ground-truth frames, in [0, 1] intensity units.
/// `w_e` holds one emotion vector per clip.
pub fn teacher_forced_mae(
    model: &DiffusionModel,
    sched: &DiffusionSchedule,
    guide: &GuideConfig,
    clips: &[FrameClip],
    w_e: &Tensor,
    seed: u64,
    exec: Exec,
    device: &Device,
) -> Result<f64> {
    let lms: Vec<&LandmarkSequence> = clips.iter().map(|c| &c.landmarks).collect();
    let ids: Vec<&RgbFrame> = clips.iter().map(|c| &c.identity).collect();
    let seeds: Vec<u64> = (0..clips.len()).map(|i| clip_seed(seed, i)).collect();
    let out = synthesize(model, sched, guide, &lms, &ids, w_e, &seeds, exec, device)?;
    let (mut total, mut n) = (0.0f64, 0usize);
    for (pred, clip) in out.iter().zip(clips) {
        for (p, g) in pred.iter().zip(&clip.frames) {
            total += p.data.iter().zip(&g.data).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
            n += p.data.len();
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Everything an inference run needs, already loaded.
pub struct Synthesizer {
    pub landmarks: LandmarkModel,
    pub diffusion: DiffusionModel,
    pub schedule: DiffusionSchedule,
    pub guide: GuideConfig,
    pub seed: u64,
    pub batch_size: usize,
}

/// Output of [`Synthesizer::run`].
pub struct Generated {
    pub frames: Vec<RgbFrame>,
    pub landmarks: LandmarkSequence,
    pub timing: TimingRecord,
}

impl Synthesizer {
    pub fn load(cfg: &RunConfig, landmark_ckpt: &Path, diffusion_ckpt: &Path, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let (landmarks, _) = load_landmark_model(landmark_ckpt, Some(&cfg.landmarks), device)?;
        let (diffusion, dcfg) = load_diffusion_model(diffusion_ckpt, Some(&cfg.diffusion), device)?;
        if dcfg.unet.time_dim != landmarks.config().encoder_width {
            return Err(Error::Checkpoint(format!(
                "diffusion model expects {}-wide emotion vectors, landmark model gives {}",
                dcfg.unet.time_dim,
                landmarks.config().encoder_width
            )));
        }
        Ok(Self {
            landmarks,
            diffusion,
            schedule: cfg.diffusion.schedule()?,
            guide: cfg.guide,
            seed: cfg.seed,
            batch_size: cfg.infer.batch_size.max(1),
        })
    }

    /// Landmarks for every clip, each clip seeded by the identity landmarks.
    pub fn landmarks_for(&self, clips: &[AudioClip], identity: &LandmarkSequence, device: &Device) -> Result<Vec<LandmarkSequence>> {
        clips
            .iter()
            .map(|c| generate_landmarks(&self.landmarks, c, identity, device))
            .collect()
    }

    pub fn run(
        &self,
        clips: &[AudioClip],
        identity_image: &RgbFrame,
        identity_landmarks: &LandmarkSequence,
        exec: Exec,
        device: &Device,
    ) -> Result<Generated> {
        if clips.is_empty() {
            return Err(validation!("no audio to synthesize"));
        }
        let start = Instant::now();
        let seqs = self.landmarks_for(clips, identity_landmarks, device)?;
        let mut frames = Vec::new();
        let mut coords = Vec::new();
        for (chunk_i, chunk) in clips.chunks(self.batch_size).enumerate() {
            let base = chunk_i * self.batch_size;
            let lms: Vec<&LandmarkSequence> = seqs[base..base + chunk.len()].iter().collect();
            let samples: Vec<f32> = chunk.iter().flat_map(|c| c.samples().iter().copied()).collect();
            let samples = Tensor::from_vec(samples, (chunk.len(), SAMPLES_PER_CLIP), device)?;
            let w_e = self.landmarks.emotion_embedding(&samples)?;
            let seeds: Vec<u64> = (0..chunk.len()).map(|i| clip_seed(self.seed, base + i)).collect();
            let out = synthesize(
                &self.diffusion,
                &self.schedule,
                &self.guide,
                &lms,
                &vec![identity_image; chunk.len()],
                &w_e,
                &seeds,
                exec,
                device,
            )?;
            for ((clip, lm), clip_frames) in chunk.iter().zip(&lms).zip(out) {
                let keep = valid_frames(clip);
                frames.extend(clip_frames.into_iter().take(keep));
                coords.extend((0..keep).flat_map(|f| lm.frame(f).iter().copied()));
            }
        }
        let wall = start.elapsed().as_secs_f64();
        let cfg = self.landmarks.config();
        let landmarks = LandmarkSequence::new(frames.len(), cfg.points, coords, cfg.mouth.clone())?;
        Ok(Generated {
            timing: TimingRecord::new(clips.len(), frames.len(), self.schedule.inference_steps().len(), wall),
            frames,
            landmarks,
        })
    }
}

fn clip_seed(seed: u64, clip: usize) -> u64 {
    seed ^ (clip as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Input files of one inference call.
pub struct InferRequest<'a> {
    pub audio: &'a Path,
    pub identity_image: &'a Path,
    /// One-frame landmarks of the identity image, normalized to [0, 1].
    pub identity_landmarks: &'a Path,
    pub landmark_checkpoint: &'a Path,
    pub diffusion_checkpoint: &'a Path,
    pub out_dir: &'a Path,
}

/// Writes `frames/`, `landmarks.json` and `timing.json` into `out_dir`.
pub fn infer(req: &InferRequest, cfg: &RunConfig, exec: Exec) -> Result<(PathBuf, TimingRecord)> {
    let dev = Device::Cpu;
    let synth = Synthesizer::load(cfg, req.landmark_checkpoint, req.diffusion_checkpoint, &dev)?;
    let clips = segment_clips(&load_audio(req.audio)?)?;
    let size = synth.diffusion.unet.config().image_size;
    let identity = RgbFrame::load(req.identity_image, size)?;
    let id_lm = LandmarkSequence::load(req.identity_landmarks)?;
    let id_lm = if id_lm.frames() == 1 { id_lm } else { id_lm.single_frame(0) };
    let out = synth.run(&clips, &identity, &id_lm, exec, &dev)?;

    std::fs::create_dir_all(req.out_dir).map_err(|e| Error::io(req.out_dir, e))?;
    let frames_dir = req.out_dir.join(FRAMES_DIR);
    if frames_dir.exists() {
        std::fs::remove_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    }
    write_frame_dir(&frames_dir, &out.frames, 0)?;
    out.landmarks.save(req.out_dir.join(LANDMARKS_FILE))?;
    let timing_path = req.out_dir.join(TIMING_FILE);
    std::fs::write(&timing_path, serde_json::to_string_pretty(&out.timing)?).map_err(|e| Error::io(&timing_path, e))?;
    log::info!(
        "wrote {} frames to {} ({:.2} s/clip)",
        out.frames.len(),
        frames_dir.display(),
        out.timing.seconds_per_clip
    );
    Ok((frames_dir, out.timing))
}

/// Landmark trajectory only, for every clip of `audio`.
pub fn gen_landmarks(
    audio: &Path,
    identity_landmarks: &Path,
    landmark_checkpoint: &Path,
    expected: Option<&crate::landmarks::LandmarkConfig>,
    out: &Path,
) -> Result<LandmarkSequence> {
    let dev = Device::Cpu;
    let (model, cfg) = load_landmark_model(landmark_checkpoint, expected, &dev)?;
    let clips = segment_clips(&load_audio(audio)?)?;
    let id = LandmarkSequence::load(identity_landmarks)?;
    let id = if id.frames() == 1 { id } else { id.single_frame(0) };
    let mut coords = Vec::new();
    for clip in &clips {
        let seq = generate_landmarks(&model, clip, &id, &dev)?;
        coords.extend((0..valid_frames(clip)).flat_map(|f| seq.frame(f).iter().copied()));
    }
    let seq = LandmarkSequence::new(coords.len() / cfg.points, cfg.points, coords, cfg.mouth.clone())?;
    seq.save(out)?;
    Ok(seq)
}
