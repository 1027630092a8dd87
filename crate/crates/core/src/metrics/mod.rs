//! Evaluation metrics: PSNR, SSIM, landmark distance and FID.

mod fid;

pub use fid::{fid, fid_from_stats, FeatureExtractor, FidResult, FidStats, PooledPixels};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::exec::Exec;
use crate::frames::RgbFrame;
use crate::landmarks::LandmarkSequence;
use crate::noise_guide::{gaussian_kernel_1d, BlurParams};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    /// Pixels at the evaluation resolution.
    pub lmd: Option<f64>,
    pub m_lmd: Option<f64>,
    pub fid: Option<f64>,
    /// Set when a covariance was singular and eigenvalues were clipped.
    pub fid_degenerate: Option<bool>,
    pub frames: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "psnr,ssim,lmd,m_lmd,fid,fid_degenerate,frames";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        format!(
            "{:.6},{:.6},{},{},{},{},{}",
            self.psnr,
            self.ssim,
            opt(self.lmd),
            opt(self.m_lmd),
            opt(self.fid),
            self.fid_degenerate.map_or(String::new(), |d| d.to_string()),
            self.frames
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

fn same_shape(a: &RgbFrame, b: &RgbFrame) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(validation!(
            "frame shapes differ: {}×{} vs {}×{}",
            a.width,
            a.height,
            b.width,
            b.height
        ));
    }
    Ok(())
}

/// `10·log10(1/MSE)` over all channels of one frame, capped at [`PSNR_CAP`].
pub fn psnr(a: &RgbFrame, b: &RgbFrame) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Valid-region separable filtering of a `w × h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Gaussian-window SSIM (7×7, σ 1.5) on luma, averaged over valid windows.
pub fn ssim(a: &RgbFrame, b: &RgbFrame) -> Result<f64> {
    same_shape(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(validation!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {}×{}",
            a.width,
            a.height
        ));
    }
    let k = gaussian_kernel_1d(BlurParams {
        kernel_size: SSIM_WINDOW,
        sigma: SSIM_SIGMA,
    })?;
    let (w, h) = (a.width, a.height);
    let (la, lb) = (a.luma(), b.luma());
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (mu_a, ow, oh) = filter_valid(&la, w, h, &k);
    let (mu_b, ..) = filter_valid(&lb, w, h, &k);
    let (e_aa, ..) = filter_valid(&prod(&la, &la), w, h, &k);
    let (e_bb, ..) = filter_valid(&prod(&lb, &lb), w, h, &k);
    let (e_ab, ..) = filter_valid(&prod(&la, &lb), w, h, &k);
    let total: f64 = (0..ow * oh)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2))
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

fn paired<'a>(a: &'a [RgbFrame], b: &'a [RgbFrame]) -> Result<Vec<(&'a RgbFrame, &'a RgbFrame)>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(validation!("cannot compare {} frames with {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).collect())
}

fn mean(v: Vec<Result<f64>>) -> Result<f64> {
    let n = v.len() as f64;
    Ok(v.into_iter().collect::<Result<Vec<_>>>()?.iter().sum::<f64>() / n)
}

/// Mean per-frame PSNR.
pub fn psnr_sequence(a: &[RgbFrame], b: &[RgbFrame], exec: Exec) -> Result<f64> {
    mean(exec.map(&paired(a, b)?, |(x, y)| psnr(x, y)))
}

/// Mean per-frame SSIM.
pub fn ssim_sequence(a: &[RgbFrame], b: &[RgbFrame], exec: Exec) -> Result<f64> {
    mean(exec.map(&paired(a, b)?, |(x, y)| ssim(x, y)))
}

/// Mean Euclidean landmark distance in pixels. Normalized coordinates map
/// to pixels by `c·(image_size − 1)`, as in mask rasterization.
pub fn lmd(
    pred: &LandmarkSequence,
    gt: &LandmarkSequence,
    subset: Option<&[usize]>,
    image_size: usize,
) -> Result<f64> {
    if (pred.frames(), pred.points()) != (gt.frames(), gt.points()) {
        return Err(validation!(
            "landmark sequences differ: {}×{} vs {}×{}",
            pred.frames(),
            pred.points(),
            gt.frames(),
            gt.points()
        ));
    }
    let all: Vec<usize> = (0..pred.points()).collect();
    let idx = subset.unwrap_or(&all);
    if idx.is_empty() || idx.iter().any(|&i| i >= pred.points()) {
        return Err(validation!("landmark subset is empty or out of range"));
    }
    let scale = (image_size.max(2) - 1) as f64;
    let mut total = 0.0;
    for f in 0..pred.frames() {
        let (p, g) = (pred.frame(f), gt.frame(f));
        for &i in idx {
            let dx = (p[i][0] as f64 - g[i][0] as f64) * scale;
            let dy = (p[i][1] as f64 - g[i][1] as f64) * scale;
            total += dx.hypot(dy);
        }
    }
    Ok(total / (pred.frames() * idx.len()) as f64)
}

/// Mouth-only landmark distance over the sequence's own mouth indices.
pub fn m_lmd(pred: &LandmarkSequence, gt: &LandmarkSequence, image_size: usize) -> Result<f64> {
    lmd(pred, gt, Some(gt.mouth()), image_size)
}

/// Inputs for a full report. Landmarks and the FID extractor are optional.
pub struct Evaluation<'a> {
    pub pred: &'a [RgbFrame],
    pub gt: &'a [RgbFrame],
    pub landmarks: Option<(&'a LandmarkSequence, &'a LandmarkSequence)>,
    pub extractor: Option<&'a dyn FeatureExtractor>,
}

pub fn evaluate(e: &Evaluation, exec: Exec) -> Result<MetricReport> {
    let size = e.gt.first().map_or(0, |f| f.width);
    let (lmd_v, m_lmd_v) = match e.landmarks {
        Some((p, g)) => (Some(lmd(p, g, None, size)?), Some(m_lmd(p, g, size)?)),
        None => (None, None),
    };
    let fid_r = match e.extractor {
        Some(x) => Some(fid(&x.extract(e.pred, exec)?, &x.extract(e.gt, exec)?)?),
        None => None,
    };
    Ok(MetricReport {
        psnr: psnr_sequence(e.pred, e.gt, exec)?,
        ssim: ssim_sequence(e.pred, e.gt, exec)?,
        lmd: lmd_v,
        m_lmd: m_lmd_v,
        fid: fid_r.map(|r| r.value),
        fid_degenerate: fid_r.map(|r| r.degenerate),
        frames: e.pred.len(),
    })
}

#[cfg(test)]
mod tests;
