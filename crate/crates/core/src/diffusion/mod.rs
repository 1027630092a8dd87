//! 3D identity diffusion: noise schedule, DDIM sampler and the conditioned
//! 3D residual U-Net.

mod ddim;
mod identity;
mod im2col;
mod schedule;
mod unet;

pub use ddim::{ddim_step, denoise_sequence, predict_x0, Denoiser};
pub use identity::IdentityEncoder;
pub use schedule::{BetaSchedule, DiffusionSchedule, Parameterization};
pub use unet::{identity_map, timestep_embedding, Conv3d, Injection, UNet3d, UNetConfig};

use candle_core::Tensor;

use crate::error::{validation, Result};

/// Length of the identity vector.
pub const IDENTITY_DIM: usize = 2048;
/// Rows × columns of the identity vector viewed as a map.
pub const IDENTITY_MAP: (usize, usize) = (32, 64);

/// Conditioning for one batch: emotion `(B, D_e)` and identity `(B, 2048)`.
#[derive(Debug, Clone)]
pub struct ConditioningBundle {
    pub w_e: Tensor,
    pub w_i: Tensor,
}

impl ConditioningBundle {
    pub fn new(w_e: Tensor, w_i: Tensor) -> Self {
        Self { w_e, w_i }
    }

    pub fn validate(&self, batch: usize, emotion_dim: usize) -> Result<()> {
        if self.w_e.dims() != [batch, emotion_dim] {
            return Err(validation!(
                "emotion conditioning {:?} should be ({batch}, {emotion_dim})",
                self.w_e.dims()
            ));
        }
        if self.w_i.dims() != [batch, IDENTITY_DIM] {
            return Err(validation!(
                "identity conditioning {:?} should be ({batch}, {IDENTITY_DIM})",
                self.w_i.dims()
            ));
        }
        Ok(())
    }

    /// Identity vector viewed as `(B, 32, 64)`.
    pub fn identity_grid(&self) -> Result<Tensor> {
        let b = self.w_i.dim(0)?;
        Ok(self.w_i.reshape((b, IDENTITY_MAP.0, IDENTITY_MAP.1))?)
    }
}
