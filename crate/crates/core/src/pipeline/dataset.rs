//! Loading ingested clips into training tensors.

use candle_core::{Device, Tensor};

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::audio::{load_audio, AudioClip};
use crate::error::{validation, Result};
use crate::frames::{read_frame_dir, RgbFrame};
use crate::landmarks::{LandmarkConfig, LandmarkSequence};
use crate::{FRAMES_PER_CLIP, SAMPLES_PER_CLIP};

/// Audio and landmarks of one clip (stage 1).
#[derive(Debug, Clone)]
pub struct LandmarkClip {
    pub id: String,
    pub samples: Vec<f32>,
    /// Identity-frame landmarks, one frame.
    pub identity: LandmarkSequence,
    pub target: LandmarkSequence,
}

/// Frames, identity image and landmarks of one clip (stage 2).
#[derive(Debug, Clone)]
pub struct FrameClip {
    pub id: String,
    pub samples: Vec<f32>,
    pub frames: Vec<RgbFrame>,
    pub identity: RgbFrame,
    pub landmarks: LandmarkSequence,
}

fn check_landmarks(seq: &LandmarkSequence, cfg: &LandmarkConfig, what: &str) -> Result<()> {
    if seq.points() != cfg.points || seq.mouth() != cfg.mouth.as_slice() {
        return Err(validation!(
            "{what} has {} points with mouth {:?}; the config expects {} points with mouth {:?}",
            seq.points(),
            seq.mouth(),
            cfg.points,
            cfg.mouth
        ));
    }
    Ok(())
}

fn clip_samples(m: &DatasetManifest, e: &ManifestEntry) -> Result<Vec<f32>> {
    let wave = load_audio(m.resolve(&e.audio))?;
    Ok(AudioClip::from_samples(wave.samples)?.wave.samples)
}

pub fn load_landmark_clip(m: &DatasetManifest, e: &ManifestEntry, cfg: &LandmarkConfig) -> Result<LandmarkClip> {
    let target = LandmarkSequence::load(m.resolve(&e.landmarks))?;
    let identity = LandmarkSequence::load(m.resolve(&e.identity_landmarks))?;
    check_landmarks(&target, cfg, &e.id)?;
    check_landmarks(&identity, cfg, &e.id)?;
    if target.frames() != FRAMES_PER_CLIP || identity.frames() != 1 {
        return Err(validation!("{}: clip landmarks must be {FRAMES_PER_CLIP} frames", e.id));
    }
    Ok(LandmarkClip {
        id: e.id.clone(),
        samples: clip_samples(m, e)?,
        identity,
        target,
    })
}

pub fn load_frame_clip(m: &DatasetManifest, e: &ManifestEntry, cfg: &LandmarkConfig, size: usize) -> Result<FrameClip> {
    let lm = load_landmark_clip(m, e, cfg)?;
    let frames = read_frame_dir(m.resolve(&e.frames_dir), size)?;
    if frames.len() != FRAMES_PER_CLIP {
        return Err(validation!("{}: expected {FRAMES_PER_CLIP} frames, found {}", e.id, frames.len()));
    }
    Ok(FrameClip {
        id: lm.id,
        samples: lm.samples,
        frames,
        identity: RgbFrame::load(m.resolve(&e.identity_image), size)?,
        landmarks: lm.target,
    })
}

/// `(samples (B, 16000), identity (B, P·2), target (B, F, P·2))`.
pub fn landmark_batch(clips: &[&LandmarkClip], device: &Device) -> Result<(Tensor, Tensor, Tensor)> {
    let b = clips.len();
    let p2 = clips.first().map_or(0, |c| c.identity.points() * 2);
    let samples: Vec<f32> = clips.iter().flat_map(|c| c.samples.iter().copied()).collect();
    let ident: Vec<f32> = clips.iter().flat_map(|c| c.identity.flat()).collect();
    let target: Vec<f32> = clips.iter().flat_map(|c| c.target.flat()).collect();
    Ok((
        Tensor::from_vec(samples, (b, SAMPLES_PER_CLIP), device)?,
        Tensor::from_vec(ident, (b, p2), device)?,
        Tensor::from_vec(target, (b, FRAMES_PER_CLIP, p2), device)?,
    ))
}
