//! Procedural talking-face samples for tests and desk-scale runs.
//!
//! A flat face with eye dots and an elliptical mouth whose opening follows
//! the envelope of an amplitude-modulated tone. The 68 landmarks follow
//! the usual layout, so mouth indices 48–67 move with the audio.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioWave};
use crate::error::{Error, Result};
use crate::frames::{write_frame_dir, RgbFrame};
use crate::landmarks::{default_mouth_indices, LandmarkSequence, DEFAULT_POINTS};
use crate::{FRAMES_PER_CLIP, SAMPLE_RATE};

const EMOTIONS: [&str; 4] = ["neutral", "happy", "sad", "angry"];

/// Per-sample metadata stored as `meta.json` in a raw sample directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub emotion: String,
    #[serde(default)]
    pub identity_frame: usize,
}

#[derive(Debug, Clone, Copy)]
struct FaceParams {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    skin: [f32; 3],
    background: [f32; 3],
    carrier_hz: f64,
    envelope_hz: f64,
    phase: f64,
    max_open: f64,
}

impl FaceParams {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            cx: 0.5 + rng.random_range(-0.03..0.03),
            cy: 0.5 + rng.random_range(-0.03..0.03),
            rx: rng.random_range(0.28..0.33),
            ry: rng.random_range(0.36..0.41),
            skin: [
                rng.random_range(0.65..0.9),
                rng.random_range(0.5..0.7),
                rng.random_range(0.4..0.55),
            ],
            background: [
                rng.random_range(0.05..0.3),
                rng.random_range(0.1..0.35),
                rng.random_range(0.2..0.45),
            ],
            carrier_hz: rng.random_range(150.0..400.0),
            envelope_hz: rng.random_range(1.5..4.0),
            phase: rng.random_range(0.0..2.0 * PI),
            max_open: rng.random_range(0.05..0.08),
        }
    }

    fn envelope(&self, t: f64) -> f64 {
        0.5 + 0.5 * (2.0 * PI * self.envelope_hz * t + self.phase).sin()
    }

    fn mouth_center(&self) -> (f64, f64) {
        (self.cx, self.cy + 0.55 * self.ry)
    }

    fn mouth_width(&self) -> f64 {
        0.38 * self.rx
    }

    fn eye_centers(&self) -> [(f64, f64); 2] {
        let y = self.cy - 0.2 * self.ry;
        [(self.cx - 0.4 * self.rx, y), (self.cx + 0.4 * self.rx, y)]
    }

    /// 68 landmarks for a given mouth opening (normalized units).
    fn landmarks(&self, open: f64) -> Vec<[f32; 2]> {
        let mut pts = Vec::with_capacity(DEFAULT_POINTS);
        let mut push = |x: f64, y: f64| pts.push([x.clamp(0.0, 1.0) as f32, y.clamp(0.0, 1.0) as f32]);
        // Jaw: lower half of the face outline; the chin drops as the mouth opens.
        for i in 0..17 {
            let th = PI * (1.0 - i as f64 / 16.0);
            let drop = 0.4 * open * th.sin();
            push(self.cx + self.rx * th.cos(), self.cy + self.ry * th.sin() * 0.95 + drop);
        }
        // Brows.
        for (ex, ey) in self.eye_centers() {
            for i in 0..5 {
                let u = i as f64 / 4.0 - 0.5;
                push(ex + u * 0.5 * self.rx, ey - 0.18 * self.ry - 0.04 * (1.0 - 4.0 * u * u) * self.ry);
            }
        }
        // Nose: bridge then base.
        for i in 0..4 {
            push(self.cx, self.cy - 0.15 * self.ry + i as f64 * 0.09 * self.ry);
        }
        for i in 0..5 {
            push(self.cx + (i as f64 - 2.0) * 0.07 * self.rx, self.cy + 0.24 * self.ry);
        }
        // Eyes: six points on a small ellipse each.
        for (ex, ey) in self.eye_centers() {
            for i in 0..6 {
                let th = PI + 2.0 * PI * i as f64 / 6.0;
                push(ex + 0.16 * self.rx * th.cos(), ey + 0.05 * self.ry * th.sin());
            }
        }
        // Mouth: 12 outer then 8 inner points.
        let (mx, my) = self.mouth_center();
        let mw = self.mouth_width();
        for i in 0..12 {
            let th = PI + 2.0 * PI * i as f64 / 12.0;
            push(mx + mw * th.cos(), my + (0.02 + 0.6 * open) * th.sin());
        }
        for i in 0..8 {
            let th = PI + 2.0 * PI * i as f64 / 8.0;
            push(mx + 0.6 * mw * th.cos(), my + 0.5 * open * th.sin());
        }
        pts
    }

    fn render(&self, open: f64, size: usize) -> RgbFrame {
        let mut f = RgbFrame::filled(size, size, self.background);
        let (mx, my) = self.mouth_center();
        let mw = self.mouth_width();
        let eyes = self.eye_centers();
        let inside = |x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64| {
            let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
            dx * dx + dy * dy <= 1.0
        };
        let s = (size.max(2) - 1) as f64;
        for py in 0..size {
            for px in 0..size {
                let (x, y) = (px as f64 / s, py as f64 / s);
                let mut c = None;
                if inside(x, y, self.cx, self.cy + 0.2 * open, self.rx, self.ry) {
                    c = Some(self.skin);
                }
                if eyes.iter().any(|&(ex, ey)| inside(x, y, ex, ey, 0.12 * self.rx, 0.06 * self.ry)) {
                    c = Some([0.08, 0.06, 0.05]);
                }
                if inside(x, y, mx, my, mw, 0.02 + 0.6 * open) {
                    c = Some([0.6, 0.15, 0.2]);
                }
                if open > 0.005 && inside(x, y, mx, my, 0.6 * mw, 0.5 * open) {
                    c = Some([0.12, 0.02, 0.04]);
                }
                if let Some(c) = c {
                    f.set_pixel(px, py, c);
                }
            }
        }
        f
    }
}

/// One generated sample held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub id: String,
    pub frames: Vec<RgbFrame>,
    pub audio: AudioWave,
    pub landmarks: LandmarkSequence,
    pub meta: SampleMeta,
}

pub fn sample_id(index: usize) -> String {
    format!("synth{index:04}")
}

/// Generates sample `index` of a seeded synthetic set.
pub fn synthetic_sample(index: usize, seconds: usize, size: usize, seed: u64) -> Result<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let p = FaceParams::draw(&mut rng);
    let n_frames = seconds * FRAMES_PER_CLIP;
    let mut frames = Vec::with_capacity(n_frames);
    let mut coords = Vec::with_capacity(n_frames * DEFAULT_POINTS);
    for i in 0..n_frames {
        let open = p.max_open * p.envelope(i as f64 / FRAMES_PER_CLIP as f64);
        frames.push(p.render(open, size));
        coords.extend(p.landmarks(open));
    }
    let samples = (0..seconds * SAMPLE_RATE as usize)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            (0.8 * p.envelope(t) * (2.0 * PI * p.carrier_hz * t).sin()) as f32
        })
        .collect();
    Ok(SyntheticSample {
        id: sample_id(index),
        frames,
        audio: AudioWave::new(samples, SAMPLE_RATE)?,
        landmarks: LandmarkSequence::new(n_frames, DEFAULT_POINTS, coords, default_mouth_indices())?,
        meta: SampleMeta {
            emotion: EMOTIONS[index % EMOTIONS.len()].to_string(),
            identity_frame: 0,
        },
    })
}

/// Writes `count` samples in the raw layout ingestion expects:
/// `<root>/<id>/{frames/, audio.wav, landmarks.json, meta.json}`.
pub fn write_synthetic_dataset(root: impl AsRef<Path>, count: usize, seconds: usize, size: usize, seed: u64) -> Result<()> {
    let root = root.as_ref();
    for i in 0..count {
        let s = synthetic_sample(i, seconds, size, seed)?;
        let dir = root.join(&s.id);
        write_frame_dir(dir.join("frames"), &s.frames, 0)?;
        write_wav(dir.join("audio.wav"), &s.audio)?;
        s.landmarks.save(dir.join("landmarks.json"))?;
        let meta = dir.join("meta.json");
        std::fs::write(&meta, serde_json::to_string_pretty(&s.meta)?).map_err(|e| Error::io(&meta, e))?;
    }
    Ok(())
}
