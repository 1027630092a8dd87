use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Standard 68-point layout: jaw 0–16, brows 17–26, nose 27–35,
/// eyes 36–47, mouth 48–67.
pub const DEFAULT_POINTS: usize = 68;

pub fn default_mouth_indices() -> Vec<usize> {
    (48..68).collect()
}

/// `F × P × 2` landmark trajectory in normalized image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LandmarkFile", into = "LandmarkFile")]
pub struct LandmarkSequence {
    frames: usize,
    points: usize,
    coords: Vec<[f32; 2]>,
    mouth: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    /// `[frame][point] = [x, y]`
    frames: Vec<Vec<[f32; 2]>>,
    mouth: Vec<usize>,
}

impl TryFrom<LandmarkFile> for LandmarkSequence {
    type Error = Error;

    fn try_from(f: LandmarkFile) -> Result<Self> {
        let points = f.frames.first().map_or(0, Vec::len);
        if f.frames.iter().any(|fr| fr.len() != points) {
            return Err(validation!("landmark frames differ in point count"));
        }
        let frames = f.frames.len();
        Self::new(frames, points, f.frames.into_iter().flatten().collect(), f.mouth)
    }
}

impl From<LandmarkSequence> for LandmarkFile {
    fn from(s: LandmarkSequence) -> Self {
        LandmarkFile {
            frames: s.coords.chunks(s.points.max(1)).map(<[_]>::to_vec).collect(),
            mouth: s.mouth,
        }
    }
}

impl LandmarkSequence {
    pub fn new(frames: usize, points: usize, coords: Vec<[f32; 2]>, mouth: Vec<usize>) -> Result<Self> {
        if coords.len() != frames * points {
            return Err(validation!(
                "{frames}×{points} landmarks need {} coordinates, got {}",
                frames * points,
                coords.len()
            ));
        }
        if let Some(c) = coords
            .iter()
            .find(|c| !(0.0..=1.0).contains(&c[0]) || !(0.0..=1.0).contains(&c[1]))
        {
            return Err(validation!("landmark coordinate {c:?} outside [0, 1]"));
        }
        validate_mouth(&mouth, points)?;
        Ok(Self {
            frames,
            points,
            coords,
            mouth,
        })
    }

    /// Builds from a flat `F × P·2` buffer (x, y interleaved per point).
    pub fn from_flat(frames: usize, points: usize, flat: &[f32], mouth: Vec<usize>) -> Result<Self> {
        if flat.len() != frames * points * 2 {
            return Err(validation!("flat landmark buffer has wrong length {}", flat.len()));
        }
        let coords = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Self::new(frames, points, coords, mouth)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn mouth(&self) -> &[usize] {
        &self.mouth
    }

    pub fn frame(&self, i: usize) -> &[[f32; 2]] {
        &self.coords[i * self.points..(i + 1) * self.points]
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn flat(&self) -> Vec<f32> {
        self.coords.iter().flat_map(|c| *c).collect()
    }

    /// A one-frame sequence holding frame `i`.
    pub fn single_frame(&self, i: usize) -> Self {
        Self {
            frames: 1,
            points: self.points,
            coords: self.frame(i).to_vec(),
            mouth: self.mouth.clone(),
        }
    }

    /// The same trajectory restricted to the mouth points, renumbered.
    pub fn mouth_subset(&self) -> Self {
        let coords = (0..self.frames)
            .flat_map(|f| self.mouth.iter().map(move |&m| (f, m)))
            .map(|(f, m)| self.coords[f * self.points + m])
            .collect();
        let n = self.mouth.len();
        Self {
            frames: self.frames,
            points: n,
            coords,
            mouth: (0..n).collect(),
        }
    }

    /// `(F, P·2)` tensor.
    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.flat(), (self.frames, self.points * 2), device)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(validation!(
                "window {start}..{} exceeds {} frames",
                start + len,
                self.frames
            ));
        }
        Ok(Self {
            frames: len,
            points: self.points,
            coords: self.coords[start * self.points..(start + len) * self.points].to_vec(),
            mouth: self.mouth.clone(),
        })
    }
}

pub fn validate_mouth(mouth: &[usize], points: usize) -> Result<()> {
    let mut seen = vec![false; points];
    for &m in mouth {
        if m >= points {
            return Err(validation!("mouth index {m} outside 0..{points}"));
        }
        if std::mem::replace(&mut seen[m], true) {
            return Err(validation!("duplicate mouth index {m}"));
        }
    }
    Ok(())
}
