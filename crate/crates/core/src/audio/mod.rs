//! Audio loading, resampling, clip segmentation and the context encoder
//! boundary.

mod encoder;
mod resample;

pub use encoder::{
    build_encoder_set, clips_tensor, context_encode, fuse_context, ContextFeature, ConvStubEncoders,
    EncoderSet,
};
pub use resample::resample;

use std::path::Path;

use crate::error::{validation, Error, Result};
use crate::{FRAMES_PER_CLIP, SAMPLES_PER_CLIP, SAMPLE_RATE};

/// Mono waveform, amplitude in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioWave {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioWave {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(validation!("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(validation!("non-finite audio sample at index {i}"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

/// One second of 16 kHz audio aligned with [`FRAMES_PER_CLIP`] video frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub wave: AudioWave,
    /// Number of leading samples that came from the source; the rest is padding.
    pub valid_samples: usize,
}

impl AudioClip {
    pub fn from_samples(mut samples: Vec<f32>) -> Result<Self> {
        if samples.len() > SAMPLES_PER_CLIP {
            return Err(validation!(
                "clip holds {} samples, at most {SAMPLES_PER_CLIP} allowed",
                samples.len()
            ));
        }
        let valid_samples = samples.len();
        samples.resize(SAMPLES_PER_CLIP, 0.0);
        Ok(Self {
            wave: AudioWave::new(samples, SAMPLE_RATE)?,
            valid_samples,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.wave.samples
    }

    pub fn duration_secs(&self) -> f64 {
        1.0
    }

    pub fn frame_count(&self) -> usize {
        FRAMES_PER_CLIP
    }
}

/// Loads a PCM or float WAV file as mono 16 kHz audio.
///
/// Multi-channel input is averaged per frame. Integer PCM is scaled to
/// [-1, 1]; the wave is only rescaled when its peak exceeds 1.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioWave> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
    };
    if interleaved.is_empty() {
        return Err(validation!("{} contains no audio", path.display()));
    }
    let mono = downmix(&interleaved, channels);
    let mut wave = AudioWave::new(mono, spec.sample_rate)?;
    if wave.sample_rate != SAMPLE_RATE {
        wave = resample(&wave, SAMPLE_RATE)?;
    }
    peak_normalize(&mut wave);
    Ok(wave)
}

/// Averages interleaved channels into one.
pub fn downmix(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect()
}

/// Scales the wave down so that its peak is at most 1.
pub fn peak_normalize(wave: &mut AudioWave) {
    let peak = wave.peak();
    if peak > 1.0 {
        wave.samples.iter_mut().for_each(|s| *s /= peak);
    }
}

/// Writes mono 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, wave: &AudioWave) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Splits a wave into one-second clips; the last clip is zero-padded.
pub fn segment_clips(wave: &AudioWave) -> Result<Vec<AudioClip>> {
    if wave.sample_rate != SAMPLE_RATE {
        return Err(validation!(
            "segment_clips expects {SAMPLE_RATE} Hz audio, got {}",
            wave.sample_rate
        ));
    }
    wave.samples
        .chunks(SAMPLES_PER_CLIP)
        .map(|chunk| AudioClip::from_samples(chunk.to_vec()))
        .collect()
}
