//! Small building blocks shared by the landmark and diffusion networks.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{layer_norm, linear, LayerNorm, LayerNormConfig, Linear, VarBuilder};

use crate::error::{validation, Result};

/// Multi-head scaled dot-product attention over `(B, T, D)` sequences.
#[derive(Debug, Clone)]
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
    head_dim: usize,
}

impl Attention {
    pub fn new(dim: usize, heads: usize, vb: VarBuilder) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(validation!("width {dim} is not divisible by {heads} heads"));
        }
        Ok(Self {
            q: linear(dim, dim, vb.pp("q"))?,
            k: linear(dim, dim, vb.pp("k"))?,
            v: linear(dim, dim, vb.pp("v"))?,
            out: linear(dim, dim, vb.pp("out"))?,
            heads,
            head_dim: dim / heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, self.head_dim))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    pub fn forward(&self, query: &Tensor, memory: &Tensor) -> Result<Tensor> {
        let (b, t, d) = query.dims3()?;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(memory)?)?;
        let v = self.split_heads(&self.v.forward(memory)?)?;
        let scores = (q.matmul(&k.t()?)? / (self.head_dim as f64).sqrt())?;
        let weights = candle_nn::ops::softmax_last_dim(&scores)?;
        let ctx = weights.matmul(&v)?.transpose(1, 2)?.reshape((b, t, d))?;
        Ok(self.out.forward(&ctx)?)
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new(dim: usize, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            up: linear(dim, hidden, vb.pp("up"))?,
            down: linear(hidden, dim, vb.pp("down"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.down.forward(&self.up.forward(x)?.gelu()?)?)
    }
}

fn norm(dim: usize, vb: VarBuilder) -> Result<LayerNorm> {
    Ok(layer_norm(dim, LayerNormConfig::default(), vb)?)
}

/// Pre-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    norm1: LayerNorm,
    attn: Attention,
    norm2: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(dim: usize, heads: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            norm1: norm(dim, vb.pp("norm1"))?,
            attn: Attention::new(dim, heads, vb.pp("attn"))?,
            norm2: norm(dim, vb.pp("norm2"))?,
            ff: FeedForward::new(dim, 2 * dim, vb.pp("ff"))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let x = (x + self.attn.forward(&h, &h)?)?;
        let h = self.norm2.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

/// A stack of [`EncoderLayer`]s.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    layers: Vec<EncoderLayer>,
}

impl TransformerEncoder {
    pub fn new(dim: usize, heads: usize, depth: usize, vb: VarBuilder) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| EncoderLayer::new(dim, heads, vb.pp(format!("layer{i}"))))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.layers.iter().try_fold(x.clone(), |x, l| l.forward(&x))
    }
}

/// Pre-norm transformer decoder layer: self-attention on the target, then
/// cross-attention into `memory`.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    norm1: LayerNorm,
    self_attn: Attention,
    norm2: LayerNorm,
    cross_attn: Attention,
    norm3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(dim: usize, heads: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            norm1: norm(dim, vb.pp("norm1"))?,
            self_attn: Attention::new(dim, heads, vb.pp("self_attn"))?,
            norm2: norm(dim, vb.pp("norm2"))?,
            cross_attn: Attention::new(dim, heads, vb.pp("cross_attn"))?,
            norm3: norm(dim, vb.pp("norm3"))?,
            ff: FeedForward::new(dim, 2 * dim, vb.pp("ff"))?,
        })
    }

    pub fn forward(&self, target: &Tensor, memory: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(target)?;
        let x = (target + self.self_attn.forward(&h, &h)?)?;
        let h = self.norm2.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory)?)?;
        let h = self.norm3.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

/// Linear interpolation along time as a fixed `(out_len, in_len)` matrix,
/// endpoints aligned.
pub fn interpolation_matrix(in_len: usize, out_len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    if in_len == 0 || out_len == 0 {
        return Err(validation!("cannot interpolate {in_len} steps to {out_len}"));
    }
    let mut m = vec![0f64; out_len * in_len];
    for i in 0..out_len {
        let pos = if out_len == 1 {
            0.0
        } else {
            i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
        };
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        m[i * in_len + lo] += 1.0 - frac;
        if frac > 0.0 {
            m[i * in_len + lo + 1] += frac;
        }
    }
    Ok(Tensor::from_vec(m, (out_len, in_len), device)?.to_dtype(dtype)?)
}

/// Resamples `(B, T_in, C)` to `(B, T_out, C)` along time.
pub fn interpolate_time(x: &Tensor, out_len: usize) -> Result<Tensor> {
    let (b, t, c) = x.dims3()?;
    if t == out_len {
        return Ok(x.clone());
    }
    let m = interpolation_matrix(t, out_len, x.dtype(), x.device())?;
    // Batched matmul against a stride-0 broadcast mixes samples in candle's
    // CPU backend, so fold the batch into rows instead.
    let rows = x.transpose(1, 2)?.contiguous()?.reshape((b * c, t))?;
    let y = rows.matmul(&m.t()?)?.reshape((b, c, out_len))?;
    Ok(y.transpose(1, 2)?.contiguous()?)
}

/// Tiles a per-sample vector `(B, C)` over `len` steps: `(B, len, C)`.
pub fn tile_time(v: &Tensor, len: usize) -> Result<Tensor> {
    let (b, c) = v.dims2()?;
    Ok(v.unsqueeze(1)?.broadcast_as((b, len, c))?.contiguous()?)
}

/// Sum of squares of every tensor, as f64.
pub fn sum_sq(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?)
}

/// Mean over the time axis of `(B, T, C)`.
pub fn mean_time(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean(D::Minus2)?)
}
