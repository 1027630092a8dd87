//! Model construction and checkpoint validation for both stages.

use std::path::Path;

use candle_core::{Device, Tensor};
use candle_nn::VarBuilder;

use super::config::DiffusionConfig;
use crate::checkpoint::{self, CheckpointKind};
use crate::diffusion::{ConditioningBundle, Denoiser, DiffusionSchedule, IdentityEncoder, Parameterization, UNet3d};
use crate::error::{Error, Result};
use crate::landmarks::{LandmarkConfig, LandmarkModel};

/// Stage-2 network: the conditioned U-Net plus its identity encoder.
pub struct DiffusionModel {
    pub unet: UNet3d,
    pub identity: IdentityEncoder,
    pub parameterization: Parameterization,
    schedule: DiffusionSchedule,
}

impl DiffusionModel {
    pub fn new(cfg: &DiffusionConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            unet: UNet3d::new(&cfg.unet, vb.pp("unet"))?,
            identity: IdentityEncoder::new(vb.pp("identity"))?,
            parameterization: cfg.parameterization,
            schedule: cfg.schedule()?,
        })
    }

    /// Noise estimate for `x_t` with one timestep per batch row.
    pub fn predict(&self, x_t: &Tensor, t: &[usize], cond: &ConditioningBundle) -> Result<Tensor> {
        let out = self.unet.forward(x_t, t, cond)?;
        self.parameterization.to_noise(out, x_t, t, &self.schedule)
    }

    /// `w_e (B, D_e)`, identity images `(B, 3, 64, 64)`.
    pub fn conditioning(&self, w_e: &Tensor, identity_images: &Tensor) -> Result<ConditioningBundle> {
        Ok(ConditioningBundle::new(w_e.clone(), self.identity.forward(identity_images)?))
    }
}

impl Denoiser for DiffusionModel {
    fn predict_noise(&self, x_t: &Tensor, t: usize, cond: &ConditioningBundle) -> Result<Tensor> {
        self.predict(x_t, &vec![t; x_t.dim(0)?], cond)
    }
}

fn mismatch(what: &str, path: &Path, saved: &impl std::fmt::Debug, wanted: &impl std::fmt::Debug) -> Error {
    Error::Checkpoint(format!(
        "{} was trained with a different {what} configuration\n  checkpoint: {saved:?}\n  config:     {wanted:?}",
        path.display()
    ))
}

/// Loads a frozen landmark generator. With `expected`, refuses a checkpoint
/// whose configuration (points, mouth indices, widths, toggles) differs.
pub fn load_landmark_model(
    path: &Path,
    expected: Option<&LandmarkConfig>,
    device: &Device,
) -> Result<(LandmarkModel, LandmarkConfig)> {
    let ckpt = checkpoint::load(path, device)?;
    ckpt.expect_kind(CheckpointKind::Landmarks)?;
    let saved: LandmarkConfig = ckpt.meta.model_config()?;
    if let Some(want) = expected {
        if &saved != want {
            return Err(mismatch("landmark", path, &saved, want));
        }
    }
    let model = LandmarkModel::new(&saved, ckpt.builder(device))?;
    Ok((model, saved))
}

/// Loads a frozen diffusion model; the U-Net section must match `expected`.
pub fn load_diffusion_model(
    path: &Path,
    expected: Option<&DiffusionConfig>,
    device: &Device,
) -> Result<(DiffusionModel, DiffusionConfig)> {
    let ckpt = checkpoint::load(path, device)?;
    ckpt.expect_kind(CheckpointKind::Diffusion)?;
    let saved: DiffusionConfig = ckpt.meta.model_config()?;
    if let Some(want) = expected {
        if saved.unet != want.unet {
            return Err(mismatch("U-Net", path, &saved.unet, &want.unet));
        }
        if saved.parameterization != want.parameterization {
            return Err(mismatch("output", path, &saved.parameterization, &want.parameterization));
        }
    }
    let model = DiffusionModel::new(&saved, ckpt.builder(device))?;
    Ok((model, saved))
}
