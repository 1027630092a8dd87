use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{validation, Result};
use crate::exec::Exec;
use crate::frames::RgbFrame;

/// Eigenvalues below this (relative to the largest) count as singular.
const SINGULAR_TOL: f64 = 1e-10;

/// Maps frames to feature vectors for FID. The network behind it decides
/// what the numbers mean; values are only comparable under one extractor.
pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn features(&self, frame: &RgbFrame) -> Vec<f64>;

    fn extract(&self, frames: &[RgbFrame], exec: Exec) -> Result<DMatrix<f64>> {
        let rows = exec.map(frames, |f| self.features(f));
        let d = self.dim();
        if rows.iter().any(|r| r.len() != d) {
            return Err(validation!("feature extractor returned a vector not of length {d}"));
        }
        Ok(DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()))
    }
}

/// Default extractor: per-channel means over a `grid × grid` block layout.
#[derive(Debug, Clone, Copy)]
pub struct PooledPixels {
    pub grid: usize,
}

impl Default for PooledPixels {
    fn default() -> Self {
        Self { grid: 4 }
    }
}

impl FeatureExtractor for PooledPixels {
    fn dim(&self) -> usize {
        self.grid * self.grid * 3
    }

    fn features(&self, f: &RgbFrame) -> Vec<f64> {
        let g = self.grid;
        let mut sums = vec![0.0; g * g * 3];
        let mut counts = vec![0usize; g * g];
        for y in 0..f.height {
            for x in 0..f.width {
                let cell = (y * g / f.height) * g + x * g / f.width;
                counts[cell] += 1;
                for (c, v) in f.pixel(x, y).iter().enumerate() {
                    sums[cell * 3 + c] += *v as f64;
                }
            }
        }
        sums.iter()
            .enumerate()
            .map(|(i, s)| s / counts[i / 3].max(1) as f64)
            .collect()
    }
}

/// Mean and covariance of a feature set.
#[derive(Debug, Clone)]
pub struct FidStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub samples: usize,
}

impl FidStats {
    /// Sample statistics of the rows of `features` (unbiased covariance).
    pub fn from_features(features: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = features.shape();
        if n < 2 || d == 0 {
            return Err(validation!("FID needs at least two feature rows, got {n}×{d}"));
        }
        let mean = features.row_mean().transpose();
        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        Ok(Self { mean, cov, samples: n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidResult {
    pub value: f64,
    /// A covariance was rank-deficient or negative eigenvalues were clipped.
    pub degenerate: bool,
}

/// Symmetric PSD square root with negative eigenvalues clipped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let singular = eig.eigenvalues.iter().any(|&v| v <= SINGULAR_TOL * scale);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    (root, singular)
}

/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2(Σ_a Σ_b)^{1/2})`.
///
/// The cross term uses `tr((√Σ_a Σ_b √Σ_a)^{1/2})`, which equals the trace
/// of `(Σ_a Σ_b)^{1/2}` and keeps every decomposition symmetric.
pub fn fid_from_stats(a: &FidStats, b: &FidStats) -> Result<FidResult> {
    let d = a.mean.len();
    if b.mean.len() != d || a.cov.shape() != (d, d) || b.cov.shape() != (d, d) {
        return Err(validation!("FID statistics have mismatched dimensions"));
    }
    let diff = &a.mean - &b.mean;
    let (sqrt_a, sing_a) = sqrt_psd(&a.cov);
    let (_, sing_b) = sqrt_psd(&b.cov);
    let inner = &sqrt_a * &b.cov * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner);
    let clipped = eig.eigenvalues.iter().any(|&v| v < 0.0);
    let cross: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let value = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    let rank_deficient = a.samples <= d || b.samples <= d;
    Ok(FidResult {
        value: value.max(0.0),
        degenerate: sing_a || sing_b || clipped || rank_deficient,
    })
}

/// FID between two `N × D` feature sets.
pub fn fid(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<FidResult> {
    if a.ncols() != b.ncols() {
        return Err(validation!("feature widths differ: {} vs {}", a.ncols(), b.ncols()));
    }
    fid_from_stats(&FidStats::from_features(a)?, &FidStats::from_features(b)?)
}
