//! Landmark-guided noise.
//!
//! Landmarks are rasterized onto a binary mask, blurred with a normalized
//! Gaussian of odd size `k`, and turned into a per-pixel noise magnitude
//! `Î = δ + I′·η` with `η ~ U[0, 1]`. The field then scales the Gaussian noise
//! that the forward diffusion process adds to the frames, so motion regions
//! get strong noise and the rest only the floor `δ`.

mod blur;

pub use blur::{gaussian_blur, gaussian_kernel_1d};

use candle_core::{Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionSchedule;
use crate::error::{contract, validation, Result};
use crate::landmarks::LandmarkSequence;
use crate::Exec;

/// Square single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub size: usize,
    pub data: Vec<f32>,
}

impl Field {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.size + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl BlurParams {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(validation!("blur kernel size must be odd, got {}", self.kernel_size));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(validation!("blur sigma must be positive, got {}", self.sigma));
        }
        Ok(())
    }

    /// Support radius `(k − 1) / 2`.
    pub fn radius(&self) -> usize {
        (self.kernel_size - 1) / 2
    }
}

/// Landmark mask: raw (`blur == None`, values in {0, 1}) or blurred.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideMask {
    pub field: Field,
    pub blur: Option<BlurParams>,
}

/// Per-pixel noise magnitude `Î` with its floor `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub field: Field,
    pub floor: f32,
}

/// Source of the uniform multiplier `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    /// i.i.d. `U[0, 1)` per pixel; `stream` separates frames of one clip.
    Uniform { seed: u64, stream: u64 },
    Constant(f32),
}

/// Guide settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuideConfig {
    pub kernel_size: usize,
    pub sigma: f64,
    pub floor: f32,
}

impl Default for GuideConfig {
    fn default() -> Self {
        Self {
            kernel_size: 13,
            sigma: 2.0,
            floor: 0.1,
        }
    }
}

impl GuideConfig {
    pub fn blur(&self) -> BlurParams {
        BlurParams {
            kernel_size: self.kernel_size,
            sigma: self.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.blur().validate()?;
        validate_floor(self.floor)
    }
}

fn validate_floor(floor: f32) -> Result<()> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(validation!("noise floor must lie in (0, 1), got {floor}"));
    }
    Ok(())
}

/// Sets the pixel nearest to each landmark (`round(c·(size − 1))`, halves
/// rounded up) to 1.
pub fn rasterize_landmarks(points: &[[f32; 2]], size: usize) -> Result<GuideMask> {
    if size == 0 {
        return Err(validation!("mask size must be positive"));
    }
    let mut field = Field::zeros(size);
    let scale = (size - 1) as f64;
    for p in points {
        if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
            return Err(validation!("landmark {p:?} outside [0, 1]"));
        }
        let x = (p[0] as f64 * scale + 0.5).floor() as usize;
        let y = (p[1] as f64 * scale + 0.5).floor() as usize;
        field.data[y * size + x] = 1.0;
    }
    Ok(GuideMask { field, blur: None })
}

/// `Î = δ + I′·η`.
pub fn make_noise_field(blurred: &GuideMask, floor: f32, eta: Eta) -> Result<NoiseField> {
    validate_floor(floor)?;
    let mut field = blurred.field.clone();
    match eta {
        Eta::Uniform { seed, stream } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            field
                .data
                .iter_mut()
                .for_each(|v| *v = floor + *v * rng.random::<f32>());
        }
        Eta::Constant(c) => field.data.iter_mut().for_each(|v| *v = floor + *v * c),
    }
    Ok(NoiseField { field, floor })
}

/// Noise fields for every frame of a landmark sequence. Frame `i` draws
/// `η` from stream `i` of `seed`, so results do not depend on `exec`.
pub fn build_guidance(
    landmarks: &LandmarkSequence,
    size: usize,
    cfg: &GuideConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<NoiseField>> {
    cfg.validate()?;
    let blur = cfg.blur();
    exec.map_range(landmarks.frames(), |i| {
        let raw = rasterize_landmarks(landmarks.frame(i), size)?;
        let blurred = gaussian_blur(&raw, blur)?;
        make_noise_field(
            &blurred,
            cfg.floor,
            Eta::Uniform {
                seed,
                stream: i as u64,
            },
        )
    })
    .into_iter()
    .collect()
}

/// Stacks per-frame fields into a `(F, H, W)` tensor.
pub fn fields_tensor(fields: &[NoiseField], device: &Device) -> Result<Tensor> {
    let size = fields.first().map_or(0, |f| f.field.size);
    if fields.iter().any(|f| f.field.size != size) {
        return Err(validation!("noise fields differ in size"));
    }
    let data: Vec<f32> = fields.iter().flat_map(|f| f.field.data.iter().copied()).collect();
    Ok(Tensor::from_vec(data, (fields.len(), size, size), device)?)
}

/// Forward noising with a spatial magnitude field:
/// `x_t = √ᾱ_t·x_0 + √(1 − ᾱ_t)·clamp(Î, 0, 1)·ε`.
///
/// `frames` and `eps` are `(B, F, H, W, 3)`; `fields` is `(B, F, H, W)`.
pub fn apply_guided_noise(
    frames: &Tensor,
    fields: &Tensor,
    eps: &Tensor,
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Tensor> {
    let (b, f, h, w, c) = frames.dims5()?;
    if eps.dims() != frames.dims() {
        return Err(contract!("noise {:?} does not match frames {:?}", eps.dims(), frames.dims()));
    }
    if fields.dims() != [b, f, h, w] {
        return Err(contract!(
            "noise field {:?} does not match frames {:?}",
            fields.dims(),
            frames.dims()
        ));
    }
    if t >= sched.train_steps() {
        return Err(validation!("timestep {t} outside schedule of {}", sched.train_steps()));
    }
    let ab = sched.alpha_bar(t);
    let magnitude = fields.clamp(0.0, 1.0)?.unsqueeze(4)?.broadcast_as((b, f, h, w, c))?;
    let noise = (eps * magnitude)?;
    Ok(((frames * ab.sqrt())? + (noise * (1.0 - ab).sqrt())?)?)
}

/// The regression target for a guided noising: `clamp(Î)·ε`.
pub fn guided_noise(fields: &Tensor, eps: &Tensor) -> Result<Tensor> {
    let (b, f, h, w, c) = eps.dims5()?;
    Ok(fields
        .clamp(0.0, 1.0)?
        .unsqueeze(4)?
        .broadcast_as((b, f, h, w, c))?
        .mul(eps)?)
}
