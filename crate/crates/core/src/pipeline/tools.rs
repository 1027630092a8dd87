//! Evaluation of frame directories and guide-mask rendering.

use std::path::Path;

use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::exec::Exec;
use crate::frames::{list_frame_files, read_frame_dir, save_gray_png, RgbFrame};
use crate::landmarks::LandmarkSequence;
use crate::metrics::{evaluate, Evaluation, MetricReport, PooledPixels};
use crate::noise_guide::{build_guidance, gaussian_blur, rasterize_landmarks, GuideConfig};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

pub struct EvalRequest<'a> {
    pub pred_frames: &'a Path,
    pub gt_frames: &'a Path,
    pub landmarks: Option<(&'a Path, &'a Path)>,
    pub fid: bool,
    pub out_dir: Option<&'a Path>,
}

/// Frames of `gt` define the size; predictions are resized to match.
pub fn evaluate_dirs(req: &EvalRequest, exec: Exec) -> Result<MetricReport> {
    let gt_files = list_frame_files(req.gt_frames)?;
    let first = gt_files
        .first()
        .ok_or_else(|| validation!("{} holds no frames", req.gt_frames.display()))?;
    let size = image::image_dimensions(first)?.0 as usize;
    let gt: Vec<RgbFrame> = read_frame_dir(req.gt_frames, size)?;
    let pred: Vec<RgbFrame> = read_frame_dir(req.pred_frames, size)?;
    if pred.len() != gt.len() {
        return Err(validation!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        ));
    }
    let lms = match req.landmarks {
        Some((p, g)) => Some((LandmarkSequence::load(p)?, LandmarkSequence::load(g)?)),
        None => None,
    };
    let extractor = PooledPixels::default();
    let report = evaluate(
        &Evaluation {
            pred: &pred,
            gt: &gt,
            landmarks: lms.as_ref().map(|(p, g)| (p, g)),
            extractor: req.fid.then_some(&extractor as _),
        },
        exec,
    )?;
    if let Some(dir) = req.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(dir.join(METRICS_JSON), serde_json::to_string_pretty(&report)?)?;
        write(dir.join(METRICS_CSV), report.to_csv())?;
    }
    Ok(report)
}

fn write(path: impl AsRef<Path>, text: String) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskSummary {
    pub frames: usize,
    pub size: usize,
    pub noise_min: f32,
    pub noise_max: f32,
}

/// Writes `mask_XXXXX.png` (raw), `blur_XXXXX.png` and `noise_XXXXX.png`
/// for every landmark frame.
pub fn render_masks(
    landmarks: &LandmarkSequence,
    size: usize,
    guide: &GuideConfig,
    seed: u64,
    out_dir: &Path,
    exec: Exec,
) -> Result<MaskSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fields = build_guidance(landmarks, size, guide, seed, exec)?;
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for (i, noise) in fields.iter().enumerate() {
        let raw = rasterize_landmarks(landmarks.frame(i), size)?;
        let blurred = gaussian_blur(&raw, guide.blur())?;
        let peak = blurred.field.max().max(f32::MIN_POSITIVE);
        let scaled: Vec<f32> = blurred.field.data.iter().map(|v| v / peak).collect();
        save_gray_png(&raw.field.data, size, size, out_dir.join(format!("mask_{i:05}.png")))?;
        save_gray_png(&scaled, size, size, out_dir.join(format!("blur_{i:05}.png")))?;
        save_gray_png(&noise.field.data, size, size, out_dir.join(format!("noise_{i:05}.png")))?;
        lo = lo.min(noise.field.min());
        hi = hi.max(noise.field.max());
    }
    Ok(MaskSummary {
        frames: fields.len(),
        size,
        noise_min: lo,
        noise_max: hi,
    })
}
