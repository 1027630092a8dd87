use super::AudioWave;
use crate::error::{validation, Result};

/// Zero crossings of the sinc kernel kept on each side, at the lower rate.
const HALF_TAPS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;
/// Fraction of the lower Nyquist frequency kept in the passband.
const ROLLOFF: f64 = 0.95;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
pub fn resample(wave: &AudioWave, target_rate: u32) -> Result<AudioWave> {
    if target_rate == 0 {
        return Err(validation!("target sample rate must be positive"));
    }
    if wave.sample_rate == target_rate {
        return Ok(wave.clone());
    }
    let ratio = target_rate as f64 / wave.sample_rate as f64;
    let out_len = (wave.samples.len() as f64 * ratio).round() as usize;
    let scale = ratio.min(1.0);
    let cutoff = 0.5 * scale * ROLLOFF;
    let half_width = HALF_TAPS / scale;
    let x = &wave.samples;
    let norm = bessel_i0(KAISER_BETA);

    let samples = (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(x.len().saturating_sub(1));
            let mut acc = 0.0f64;
            for (k, &xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                let w = {
                    let r = d / half_width;
                    bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm
                };
                acc += xk as f64 * 2.0 * cutoff * sinc(2.0 * cutoff * d) * w;
            }
            acc as f32
        })
        .collect();
    AudioWave::new(samples, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
