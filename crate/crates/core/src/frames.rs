//! RGB frame buffers, PNG directories and tensor conversion.

use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use image::imageops::FilterType;

use crate::error::{validation, Error, Result};

/// Row-major HWC RGB image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(validation!(
                "{width}×{height} RGB frame needs {} values, got {}",
                width * height * 3,
                data.len()
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// ITU-R BT.601 luma.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    fn to_image(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length checked at construction")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save(path.as_ref())?;
        Ok(())
    }

    /// Loads a PNG (or any format the `image` crate decodes), resized to `size`×`size`.
    pub fn load(path: impl AsRef<Path>, size: usize) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)?.to_rgb8();
        let img = if img.width() as usize != size || img.height() as usize != size {
            image::imageops::resize(&img, size as u32, size as u32, FilterType::Triangle)
        } else {
            img
        };
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self::new(size, size, data)
    }

    pub fn resized(&self, size: usize) -> Self {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let img = image::imageops::resize(&self.to_image(), size as u32, size as u32, FilterType::Triangle);
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self {
            width: size,
            height: size,
            data,
        }
    }
}

/// Writes a single-channel field in [0, 1] as a grayscale PNG.
pub fn save_gray_png(values: &[f32], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let bytes = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| validation!("{width}×{height} gray image needs {} values", width * height))?;
    img.save(path.as_ref())?;
    Ok(())
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Writes frames as `frame_00000.png`, `frame_00001.png`, ... into `dir`.
pub fn write_frame_dir(dir: impl AsRef<Path>, frames: &[RgbFrame], first_index: usize) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        f.save_png(dir.join(frame_file_name(first_index + i)))?;
    }
    Ok(())
}

/// Sorted image files of a frame directory.
pub fn list_frame_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_frame_dir(dir: impl AsRef<Path>, size: usize) -> Result<Vec<RgbFrame>> {
    list_frame_files(dir)?.iter().map(|p| RgbFrame::load(p, size)).collect()
}

/// Stacks `B` sequences of `F` frames into a `(B, F, H, W, 3)` tensor in [-1, 1].
pub fn frames_to_tensor(batch: &[&[RgbFrame]], device: &Device) -> Result<Tensor> {
    let b = batch.len();
    let f = batch.first().map_or(0, |s| s.len());
    let (h, w) = batch
        .first()
        .and_then(|s| s.first())
        .map_or((0, 0), |fr| (fr.height, fr.width));
    let mut data = Vec::with_capacity(b * f * h * w * 3);
    for seq in batch {
        if seq.len() != f {
            return Err(validation!("every sequence in a batch needs {f} frames"));
        }
        for fr in seq.iter() {
            if (fr.height, fr.width) != (h, w) {
                return Err(validation!("mixed frame sizes in one batch"));
            }
            data.extend(fr.data.iter().map(|v| v * 2.0 - 1.0));
        }
    }
    Ok(Tensor::from_vec(data, (b, f, h, w, 3), device)?)
}

/// Inverse of [`frames_to_tensor`]: maps [-1, 1] back to [0, 1] (clamped).
pub fn tensor_to_frames(x: &Tensor) -> Result<Vec<Vec<RgbFrame>>> {
    let (b, f, h, w, c) = x.dims5()?;
    if c != 3 {
        return Err(validation!("expected 3 channels, got {c}"));
    }
    let data: Vec<f32> = x.to_dtype(candle_core::DType::F32)?.flatten_all()?.to_vec1()?;
    let per_frame = h * w * 3;
    Ok((0..b)
        .map(|bi| {
            (0..f)
                .map(|fi| {
                    let start = (bi * f + fi) * per_frame;
                    let px = data[start..start + per_frame]
                        .iter()
                        .map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
                        .collect();
                    RgbFrame {
                        width: w,
                        height: h,
                        data: px,
                    }
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_quantizes_to_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = RgbFrame::filled(4, 3, [0.0, 0.5, 1.0]);
        f.set_pixel(1, 2, [1.0, 0.0, 0.25]);
        let p = dir.path().join("x.png");
        f.save_png(&p).unwrap();
        let g = RgbFrame::load(&p, 4);
        // non-square source is resized to 4×4
        assert_eq!(g.unwrap().height, 4);
        let sq = RgbFrame::filled(4, 4, [0.2, 0.4, 0.6]);
        sq.save_png(&p).unwrap();
        let back = RgbFrame::load(&p, 4).unwrap();
        for (a, b) in sq.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn tensor_round_trip() {
        let a = RgbFrame::filled(2, 2, [0.0, 0.25, 1.0]);
        let seq = vec![a.clone(), a];
        let t = frames_to_tensor(&[&seq], &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[1, 2, 2, 2, 3]);
        let back = tensor_to_frames(&t).unwrap();
        assert_eq!(back[0], seq);
    }
}
