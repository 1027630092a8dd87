//! 3D residual U-Net over `(B, C, F, H, W)` activations.
//!
//! Convolutions are 3×3×3 and run as im2col plus a matmul.
//! Downsampling halves the spatial dims only, keeping all frames.

use candle_core::{Device, Module, Tensor};
use candle_nn::{conv2d, group_norm, linear, Conv2d, Conv2dConfig, GroupNorm, Init, Linear, VarBuilder};
use serde::{Deserialize, Serialize};

use super::im2col::im2col3;
use super::{ConditioningBundle, Denoiser, IDENTITY_DIM, IDENTITY_MAP};
use crate::error::{validation, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UNetConfig {
    /// Widths of the three resolution levels.
    pub channels: [usize; 3],
    pub norm_groups: usize,
    /// Sinusoidal timestep width; the emotion vector is added to it, so it
    /// must equal the emotion embedding width.
    pub time_dim: usize,
    pub image_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            channels: [32, 64, 128],
            norm_groups: 8,
            time_dim: 64,
            image_size: 128,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        for c in self.channels {
            if c == 0 || c % self.norm_groups != 0 {
                return Err(validation!(
                    "U-Net width {c} is not a positive multiple of {} norm groups",
                    self.norm_groups
                ));
            }
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(validation!("time_dim must be even and positive"));
        }
        let s = self.bottleneck_size();
        if self.image_size % 8 != 0 || s == 0 || IDENTITY_MAP.0 % s != 0 || IDENTITY_MAP.1 % s != 0 {
            return Err(validation!(
                "image size {} must be a multiple of 8 whose bottleneck divides the {}×{} identity map",
                self.image_size,
                IDENTITY_MAP.0,
                IDENTITY_MAP.1
            ));
        }
        Ok(())
    }

    pub fn bottleneck_size(&self) -> usize {
        self.image_size / 8
    }

    fn emb_dim(&self) -> usize {
        4 * self.time_dim
    }
}

/// Which conditioning paths a forward pass uses. Both are on in normal use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub emotion: bool,
    pub identity: bool,
}

impl Default for Injection {
    fn default() -> Self {
        Self {
            emotion: true,
            identity: true,
        }
    }
}

/// `(B, C, F, H, W) → (B·F, C, H, W)`
fn frames_as_batch(x: &Tensor) -> Result<Tensor> {
    let (b, c, f, h, w) = x.dims5()?;
    Ok(x.permute((0, 2, 1, 3, 4))?.contiguous()?.reshape((b * f, c, h, w))?)
}

/// `(B·F, C, H, W) → (B, C, F, H, W)`
fn batch_as_frames(x: &Tensor, b: usize, f: usize) -> Result<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    Ok(x.reshape((b, f, c, h, w))?.permute((0, 2, 1, 3, 4))?.contiguous()?)
}

/// Upper bound on im2col buffer elements per 2D convolution call.
const IM2COL_BUDGET: usize = 1 << 23;

/// Runs `conv` over the leading (frame) axis in chunks sized so that the
/// im2col buffer of one call stays under [`IM2COL_BUDGET`].
fn chunked_conv2d(
    x: &Tensor,
    kernel_elems: usize,
    out_hw: usize,
    conv: impl Fn(&Tensor) -> candle_core::Result<Tensor>,
) -> Result<Tensor> {
    let n = x.dim(0)?;
    let per_item = (kernel_elems * out_hw).max(1);
    let chunk = (IM2COL_BUDGET / per_item).clamp(1, n.max(1));
    if chunk >= n {
        return Ok(conv(x)?);
    }
    let parts = (0..n)
        .step_by(chunk)
        .map(|start| conv(&x.narrow(0, start, chunk.min(n - start))?))
        .collect::<candle_core::Result<Vec<_>>>()?;
    Ok(Tensor::cat(&parts, 0)?)
}

/// 3×3×3 convolution, zero padded in all three dims.
#[derive(Debug, Clone)]
pub struct Conv3d {
    weight: Tensor,
    bias: Tensor,
}

impl Conv3d {
    pub fn new(cin: usize, cout: usize, vb: VarBuilder) -> Result<Self> {
        let fan_in = (cin * 27) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = vb.get_with_hints((cout, cin, 3, 3, 3), "weight", candle_nn::init::DEFAULT_KAIMING_NORMAL)?;
        let bias = vb.get_with_hints(cout, "bias", Init::Uniform { lo: -bound, up: bound })?;
        Ok(Self { weight, bias })
    }

    /// One matmul per frame chunk over im2col columns; a chunk's column
    /// buffer stays under [`IM2COL_BUDGET`] elements.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, cin, f, h, w) = x.dims5()?;
        let cout = self.weight.dim(0)?;
        let wmat = self.weight.permute((0, 2, 3, 4, 1))?.reshape((cout, 27 * cin))?;
        let chunk = (IM2COL_BUDGET / (b * 27 * cin * h * w).max(1)).clamp(1, f.max(1));
        let mut parts = Vec::new();
        for start in (0..f).step_by(chunk) {
            let n = chunk.min(f - start);
            let cols = im2col3(x, start, n)?;
            let per_sample = (0..b)
                .map(|i| wmat.matmul(&cols.get(i)?)?.reshape((cout, n, h, w)))
                .collect::<candle_core::Result<Vec<_>>>()?;
            parts.push(Tensor::stack(&per_sample, 0)?);
        }
        Ok(Tensor::cat(&parts, 2)?.broadcast_add(&self.bias.reshape((1, cout, 1, 1, 1))?)?)
    }
}

/// Per-frame 2D convolution (kernel `k`, stride `s`, padding `k / 2`).
#[derive(Debug, Clone)]
struct FrameConv {
    conv: Conv2d,
    kernel_elems: usize,
    stride: usize,
}

impl FrameConv {
    fn new(cin: usize, cout: usize, k: usize, stride: usize, vb: VarBuilder) -> Result<Self> {
        let cfg = Conv2dConfig {
            padding: k / 2,
            stride,
            ..Default::default()
        };
        Ok(Self {
            conv: conv2d(cin, cout, k, cfg, vb)?,
            kernel_elems: cin * k * k,
            stride,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, _, f, h, w) = x.dims5()?;
        let out_hw = (h / self.stride) * (w / self.stride);
        let y = chunked_conv2d(&frames_as_batch(x)?, self.kernel_elems, out_hw, |c| self.conv.forward(c))?;
        batch_as_frames(&y, b, f)
    }
}

#[derive(Debug, Clone)]
struct ResBlock3d {
    norm1: GroupNorm,
    conv1: Conv3d,
    emb: Linear,
    norm2: GroupNorm,
    conv2: Conv3d,
    skip: Option<FrameConv>,
}

impl ResBlock3d {
    fn new(cin: usize, cout: usize, emb_dim: usize, groups: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            norm1: group_norm(groups, cin, 1e-5, vb.pp("norm1"))?,
            conv1: Conv3d::new(cin, cout, vb.pp("conv1"))?,
            emb: linear(emb_dim, cout, vb.pp("emb"))?,
            norm2: group_norm(groups, cout, 1e-5, vb.pp("norm2"))?,
            conv2: Conv3d::new(cout, cout, vb.pp("conv2"))?,
            skip: if cin == cout {
                None
            } else {
                Some(FrameConv::new(cin, cout, 1, 1, vb.pp("skip"))?)
            },
        })
    }

    fn forward(&self, x: &Tensor, emb: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(&self.norm1.forward(x)?.silu()?)?;
        let (b, c) = (h.dim(0)?, h.dim(1)?);
        let bias = self.emb.forward(&emb.silu()?)?.reshape((b, c, 1, 1, 1))?;
        let h = h.broadcast_add(&bias)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.silu()?)?;
        let skip = match &self.skip {
            Some(s) => s.forward(x)?,
            None => x.clone(),
        };
        Ok((h + skip)?)
    }
}

fn upsample(x: &Tensor) -> Result<Tensor> {
    let (b, _, f, h, w) = x.dims5()?;
    let up = frames_as_batch(x)?.upsample_nearest2d(2 * h, 2 * w)?;
    batch_as_frames(&up, b, f)
}

/// Sinusoidal embedding of integer timesteps, `(B, dim)`.
pub fn timestep_embedding(t: &[usize], dim: usize, device: &Device) -> Result<Tensor> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &step in t {
        let sin_part = (0..half).map(|i| {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            (step as f64 * freq).sin() as f32
        });
        let cos_part = (0..half).map(|i| {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            (step as f64 * freq).cos() as f32
        });
        data.extend(sin_part.chain(cos_part));
    }
    Ok(Tensor::from_vec(data, (t.len(), dim), device)?)
}

/// Average-pools the `32 × 64` identity map down to `size × size`: `(B, size, size)`.
pub fn identity_map(w_i: &Tensor, size: usize) -> Result<Tensor> {
    let (b, n) = w_i.dims2()?;
    if n != IDENTITY_DIM {
        return Err(validation!("identity vector has {n} values, expected {IDENTITY_DIM}"));
    }
    let (rows, cols) = IDENTITY_MAP;
    Ok(w_i
        .reshape((b, size, rows / size, size, cols / size))?
        .mean(4)?
        .mean(2)?)
}

/// The denoiser: a three-level 3D residual U-Net. The emotion vector is
/// added to the timestep embedding; the identity map multiplies the latent
/// right after the last downsampling.
#[derive(Debug, Clone)]
pub struct UNet3d {
    cfg: UNetConfig,
    time1: Linear,
    time2: Linear,
    conv_in: Conv3d,
    down_blocks: Vec<ResBlock3d>,
    downsample: Vec<FrameConv>,
    mid: ResBlock3d,
    up_blocks: Vec<ResBlock3d>,
    norm_out: GroupNorm,
    conv_out: Conv3d,
}

impl UNet3d {
    pub fn new(cfg: &UNetConfig, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let [c1, c2, c3] = cfg.channels;
        let g = cfg.norm_groups;
        let e = cfg.emb_dim();
        let down_blocks = vec![
            ResBlock3d::new(c1, c1, e, g, vb.pp("down0"))?,
            ResBlock3d::new(c1, c2, e, g, vb.pp("down1"))?,
            ResBlock3d::new(c2, c3, e, g, vb.pp("down2"))?,
        ];
        let downsample = [c1, c2, c3]
            .iter()
            .enumerate()
            .map(|(i, &c)| FrameConv::new(c, c, 3, 2, vb.pp(format!("downsample{i}"))))
            .collect::<Result<_>>()?;
        let up_blocks = vec![
            ResBlock3d::new(2 * c3, c2, e, g, vb.pp("up2"))?,
            ResBlock3d::new(2 * c2, c1, e, g, vb.pp("up1"))?,
            ResBlock3d::new(2 * c1, c1, e, g, vb.pp("up0"))?,
        ];
        Ok(Self {
            cfg: cfg.clone(),
            time1: linear(cfg.time_dim, e, vb.pp("time1"))?,
            time2: linear(e, e, vb.pp("time2"))?,
            conv_in: Conv3d::new(3, c1, vb.pp("conv_in"))?,
            down_blocks,
            downsample,
            mid: ResBlock3d::new(c3, c3, e, g, vb.pp("mid"))?,
            up_blocks,
            norm_out: group_norm(g, c1, 1e-5, vb.pp("norm_out"))?,
            conv_out: Conv3d::new(c1, 3, vb.pp("conv_out"))?,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    /// Timestep embedding with the emotion vector added, before the MLP.
    pub fn time_input(&self, t: &[usize], cond: &ConditioningBundle, inject: Injection) -> Result<Tensor> {
        let emb = timestep_embedding(t, self.cfg.time_dim, cond.w_e.device())?.to_dtype(cond.w_e.dtype())?;
        if inject.emotion {
            Ok((emb + &cond.w_e)?)
        } else {
            Ok(emb)
        }
    }

    /// `x_t` is `(B, F, H, W, 3)`; returns the noise estimate in the same layout.
    pub fn forward_with(
        &self,
        x_t: &Tensor,
        t: &[usize],
        cond: &ConditioningBundle,
        inject: Injection,
    ) -> Result<Tensor> {
        let (b, _f, h, w, c) = x_t.dims5()?;
        if c != 3 || h != self.cfg.image_size || w != self.cfg.image_size {
            return Err(validation!(
                "U-Net expects (B, F, {s}, {s}, 3) input, got {:?}",
                x_t.dims(),
                s = self.cfg.image_size
            ));
        }
        if t.len() != b {
            return Err(validation!("{} timesteps for a batch of {b}", t.len()));
        }
        cond.validate(b, self.cfg.time_dim)?;

        let emb = self.time_input(t, cond, inject)?;
        let emb = self.time2.forward(&self.time1.forward(&emb)?.silu()?)?;

        let x = x_t.permute((0, 4, 1, 2, 3))?.contiguous()?;
        let mut hcur = self.conv_in.forward(&x)?;
        let mut skips = Vec::with_capacity(3);
        for (block, down) in self.down_blocks.iter().zip(&self.downsample) {
            hcur = block.forward(&hcur, &emb)?;
            skips.push(hcur.clone());
            hcur = down.forward(&hcur)?;
        }
        if inject.identity {
            let s = self.cfg.bottleneck_size();
            let map = identity_map(&cond.w_i, s)?.reshape((b, 1, 1, s, s))?;
            hcur = hcur.broadcast_mul(&map)?;
        }
        hcur = self.mid.forward(&hcur, &emb)?;
        for block in &self.up_blocks {
            let skip = skips.pop().expect("one skip per level");
            hcur = Tensor::cat(&[&upsample(&hcur)?, &skip], 1)?;
            hcur = block.forward(&hcur, &emb)?;
        }
        let out = self.conv_out.forward(&self.norm_out.forward(&hcur)?.silu()?)?;
        Ok(out.permute((0, 2, 3, 4, 1))?.contiguous()?)
    }

    pub fn forward(&self, x_t: &Tensor, t: &[usize], cond: &ConditioningBundle) -> Result<Tensor> {
        self.forward_with(x_t, t, cond, Injection::default())
    }
}

impl Denoiser for UNet3d {
    fn predict_noise(&self, x_t: &Tensor, t: usize, cond: &ConditioningBundle) -> Result<Tensor> {
        let b = x_t.dim(0)?;
        self.forward(x_t, &vec![t; b], cond)
    }
}

