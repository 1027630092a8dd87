use super::{BlurParams, Field, GuideMask};
use crate::error::Result;

/// `exp(−i²/2σ²)` for `i ∈ [−r, r]`, renormalized to sum 1. The 2-D kernel
/// is the outer product of this with itself.
pub fn gaussian_kernel_1d(params: BlurParams) -> Result<Vec<f64>> {
    params.validate()?;
    let r = params.radius() as i64;
    let two_s2 = 2.0 * params.sigma * params.sigma;
    let raw: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / two_s2).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Separable Gaussian blur with zero padding.
pub fn gaussian_blur(mask: &GuideMask, params: BlurParams) -> Result<GuideMask> {
    let kernel = gaussian_kernel_1d(params)?;
    let n = mask.field.size;
    let r = params.radius() as isize;
    let src = &mask.field.data;

    let mut rows = vec![0f64; n * n];
    for y in 0..n {
        let line = &src[y * n..(y + 1) * n];
        // skip empty rows; landmark masks are sparse
        if line.iter().all(|&v| v == 0.0) {
            continue;
        }
        for x in 0..n as isize {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = x + ki as isize - r;
                if (0..n as isize).contains(&sx) {
                    acc += line[sx as usize] as f64 * kv;
                }
            }
            rows[y * n + x as usize] = acc;
        }
    }

    let mut out = vec![0f32; n * n];
    for x in 0..n {
        for y in 0..n as isize {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = y + ki as isize - r;
                if (0..n as isize).contains(&sy) {
                    acc += rows[sy as usize * n + x] * kv;
                }
            }
            out[y as usize * n + x] = acc as f32;
        }
    }
    Ok(GuideMask {
        field: Field { size: n, data: out },
        blur: Some(params),
    })
}
