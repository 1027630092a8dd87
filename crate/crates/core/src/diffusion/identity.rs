use candle_core::{Device, Module, Tensor};
use candle_nn::{conv2d, Conv2d, Conv2dConfig, VarBuilder};

use super::IDENTITY_DIM;
use crate::error::{validation, Result};
use crate::frames::RgbFrame;

/// Desk-scale stand-in for the pretrained identity backbone: four stride-2
/// convolutions from a 64×64 image to a `128 × 4 × 4` map, flattened to 2048.
#[derive(Debug, Clone)]
pub struct IdentityEncoder {
    convs: Vec<Conv2d>,
}

impl IdentityEncoder {
    pub const INPUT_SIZE: usize = 64;
    const WIDTHS: [usize; 5] = [3, 16, 32, 64, 128];

    pub fn new(vb: VarBuilder) -> Result<Self> {
        let cfg = Conv2dConfig {
            padding: 1,
            stride: 2,
            ..Default::default()
        };
        let convs = Self::WIDTHS
            .windows(2)
            .enumerate()
            .map(|(i, w)| conv2d(w[0], w[1], 3, cfg, vb.pp(format!("conv{i}"))))
            .collect::<candle_core::Result<_>>()?;
        Ok(Self { convs })
    }

    /// `(B, 3, 64, 64)` in [-1, 1] → `(B, 2048)`.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = images.dims4()?;
        if c != 3 || h != Self::INPUT_SIZE || w != Self::INPUT_SIZE {
            return Err(validation!("identity encoder expects (B, 3, 64, 64), got {:?}", images.dims()));
        }
        let last = self.convs.len() - 1;
        let mut x = images.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(&x)?;
            if i != last {
                x = x.silu()?;
            }
        }
        let out = x.reshape((b, IDENTITY_DIM))?;
        Ok(out)
    }

    /// Resizes identity images and stacks them as `(B, 3, 64, 64)` in [-1, 1].
    pub fn prepare(images: &[&RgbFrame], device: &Device) -> Result<Tensor> {
        let s = Self::INPUT_SIZE;
        let mut data = Vec::with_capacity(images.len() * 3 * s * s);
        for img in images {
            let r = img.resized(s);
            for ch in 0..3 {
                data.extend(r.data.iter().skip(ch).step_by(3).map(|v| v * 2.0 - 1.0));
            }
        }
        Ok(Tensor::from_vec(data, (images.len(), 3, s, s), device)?)
    }

    pub fn encode(&self, images: &[&RgbFrame], device: &Device) -> Result<Tensor> {
        self.forward(&Self::prepare(images, device)?)
    }
}
