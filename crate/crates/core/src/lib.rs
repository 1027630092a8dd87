//! Audio-driven talking-head generation.
//!
//! The pipeline turns one second of 16 kHz speech plus a still identity image
//! into 30 video frames:
//!
//! 1. [`landmarks`] predicts a facial landmark trajectory from the audio,
//!    combining a raw-audio (global) branch with an encoder-based (context)
//!    branch and a KAN prediction head ([`kan`]).
//! 2. [`noise_guide`] rasterizes those landmarks, blurs them into a guide mask
//!    and builds a per-pixel noise magnitude field with a floor.
//! 3. [`diffusion`] noises the identity frames with that field and denoises
//!    them with a 3D residual U-Net under an 8-step DDIM schedule.
//!
//! [`metrics`] holds the evaluation suite and [`pipeline`] the dataset,
//! training, inference and ablation drivers used by the `atldiff` CLI.

pub mod audio;
pub mod checkpoint;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod frames;
pub mod init;
pub mod kan;
pub mod landmarks;
pub mod metrics;
pub mod nn;
pub mod noise_guide;
pub mod pipeline;

pub use error::{Error, Result};
pub use exec::Exec;

/// Frames per one-second clip.
pub const FRAMES_PER_CLIP: usize = 30;
/// Audio sample rate after loading.
pub const SAMPLE_RATE: u32 = 16_000;
/// Samples per one-second clip.
pub const SAMPLES_PER_CLIP: usize = SAMPLE_RATE as usize;
