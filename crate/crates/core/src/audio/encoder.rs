//! Context-domain encoder boundary.
//!
//! The speech and emotion encoders are pluggable through [`EncoderSet`].
//! Whatever backs them, both must emit `(B, T_a, D_c)` features so that the
//! fused context is their elementwise product.

use candle_core::{Module, Tensor};
use candle_nn::{conv1d, Conv1d, Conv1dConfig, VarBuilder};

use super::AudioClip;
use crate::error::{contract, validation, Result};
use crate::nn::mean_time;
use crate::SAMPLES_PER_CLIP;

/// Fused context `c` and pooled emotion embedding `w_e` for a batch of clips.
#[derive(Debug, Clone)]
pub struct ContextFeature {
    /// `(B, T_a, D_c)`
    pub c: Tensor,
    /// `(B, D_e)`
    pub w_e: Tensor,
}

/// A speech encoder and an emotion encoder over raw 16 kHz clips.
pub trait EncoderSet: Send + Sync {
    /// Speech features, `(B, T_a, D_c)`, from `(B, 16000)` samples.
    fn speech(&self, samples: &Tensor) -> Result<Tensor>;
    /// Emotion features, `(B, T_a, D_c)`, from `(B, 16000)` samples.
    fn emotion(&self, samples: &Tensor) -> Result<Tensor>;
    fn steps(&self) -> usize;
    fn width(&self) -> usize;
}

/// Elementwise fusion of emotion and speech features; `w_e` is the
/// time-mean of the emotion features.
pub fn fuse_context(speech: &Tensor, emotion: &Tensor) -> Result<ContextFeature> {
    if speech.dims() != emotion.dims() {
        return Err(contract!(
            "speech features {:?} and emotion features {:?} must share a shape",
            speech.dims(),
            emotion.dims()
        ));
    }
    if speech.rank() != 3 {
        return Err(contract!("context features must be (B, T, D), got {:?}", speech.dims()));
    }
    Ok(ContextFeature {
        c: (emotion * speech)?,
        w_e: mean_time(emotion)?,
    })
}

/// Runs both encoders on a batch of raw clips, `(B, 16000)`, and fuses them.
pub fn context_encode(samples: &Tensor, encoders: &dyn EncoderSet) -> Result<ContextFeature> {
    let (_, n) = samples.dims2()?;
    if n != SAMPLES_PER_CLIP {
        return Err(validation!("expected {SAMPLES_PER_CLIP} samples per clip, got {n}"));
    }
    fuse_context(&encoders.speech(samples)?, &encoders.emotion(samples)?)
}

/// Stacks clips into a `(B, 16000)` tensor.
pub fn clips_tensor(clips: &[&AudioClip], device: &candle_core::Device) -> Result<Tensor> {
    let flat: Vec<f32> = clips.iter().flat_map(|c| c.samples().iter().copied()).collect();
    Ok(Tensor::from_vec(flat, (clips.len(), SAMPLES_PER_CLIP), device)?)
}

#[derive(Debug, Clone)]
struct StridedConvStack {
    convs: Vec<Conv1d>,
}

impl StridedConvStack {
    /// Three patchifying convolutions: 16000 → 3200 → 400 → 50 steps.
    const STRIDES: [usize; 3] = [5, 8, 8];

    fn new(width: usize, vb: VarBuilder) -> Result<Self> {
        let chans = [1, width / 2, width, width];
        let convs = Self::STRIDES
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let cfg = Conv1dConfig {
                    stride: s,
                    ..Default::default()
                };
                conv1d(chans[i], chans[i + 1], s, cfg, vb.pp(format!("conv{i}")))
            })
            .collect::<candle_core::Result<_>>()?;
        Ok(Self { convs })
    }

    fn forward(&self, samples: &Tensor) -> Result<Tensor> {
        let mut x = samples.unsqueeze(1)?;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(&x)?;
            if i != last {
                x = x.gelu()?;
            }
        }
        Ok(x.transpose(1, 2)?.contiguous()?)
    }
}

/// Desk-scale trainable stand-ins for the pretrained speech and emotion
/// encoders: strided 1-D convolutions emitting 50 steps per clip.
#[derive(Debug, Clone)]
pub struct ConvStubEncoders {
    speech: StridedConvStack,
    emotion: StridedConvStack,
    width: usize,
}

impl ConvStubEncoders {
    pub const STEPS: usize = 50;

    pub fn new(width: usize, vb: VarBuilder) -> Result<Self> {
        if width < 2 {
            return Err(validation!("encoder width must be at least 2"));
        }
        Ok(Self {
            speech: StridedConvStack::new(width, vb.pp("speech"))?,
            emotion: StridedConvStack::new(width, vb.pp("emotion"))?,
            width,
        })
    }
}

impl EncoderSet for ConvStubEncoders {
    fn speech(&self, samples: &Tensor) -> Result<Tensor> {
        self.speech.forward(samples)
    }

    fn emotion(&self, samples: &Tensor) -> Result<Tensor> {
        self.emotion.forward(samples)
    }

    fn steps(&self) -> usize {
        Self::STEPS
    }

    fn width(&self) -> usize {
        self.width
    }
}

/// Builds the encoder set registered under `name`.
pub fn build_encoder_set(name: &str, width: usize, vb: VarBuilder) -> Result<Box<dyn EncoderSet>> {
    match name {
        "conv-stub" => Ok(Box::new(ConvStubEncoders::new(width, vb)?)),
        other => Err(validation!("unknown encoder_set `{other}` (known: conv-stub)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use candle_nn::VarMap;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(seed: u64, shape: (usize, usize, usize)) -> (Vec<f64>, Tensor) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.0 * shape.1 * shape.2;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = Tensor::from_vec(v.clone(), shape, &Device::Cpu).unwrap();
        (v, t)
    }

    #[test]
    fn ones_emotion_is_identity() {
        let (_, speech) = rand_tensor(1, (1, 4, 8));
        let ones = Tensor::ones((1, 4, 8), DType::F64, &Device::Cpu).unwrap();
        let ctx = fuse_context(&speech, &ones).unwrap();
        let a: Vec<f64> = ctx.c.flatten_all().unwrap().to_vec1().unwrap();
        let b: Vec<f64> = speech.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_operand_absorbs() {
        let (_, speech) = rand_tensor(2, (1, 4, 8));
        let zeros = speech.zeros_like().unwrap();
        for ctx in [fuse_context(&speech, &zeros).unwrap(), fuse_context(&zeros, &speech).unwrap()] {
            let c: Vec<f64> = ctx.c.flatten_all().unwrap().to_vec1().unwrap();
            assert!(c.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fusion_is_elementwise_product() {
        let (a, at) = rand_tensor(3, (1, 4, 8));
        let (b, bt) = rand_tensor(4, (1, 4, 8));
        let ctx = fuse_context(&at, &bt).unwrap();
        let c: Vec<f64> = ctx.c.flatten_all().unwrap().to_vec1().unwrap();
        for i in 0..4 {
            for j in 0..8 {
                let k = i * 8 + j;
                assert_eq!(c[k], a[k] * b[k]);
            }
        }
        // w_e is the time mean of the emotion operand
        let w: Vec<f64> = ctx.w_e.flatten_all().unwrap().to_vec1().unwrap();
        for j in 0..8 {
            let m = (0..4).map(|i| b[i * 8 + j]).sum::<f64>() / 4.0;
            assert!((w[j] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_is_linear_in_speech() {
        let (_, a) = rand_tensor(5, (2, 3, 4));
        let (_, b) = rand_tensor(6, (2, 3, 4));
        let c1 = fuse_context(&a, &b).unwrap().c;
        let c2 = fuse_context(&(&a * 2.0).unwrap(), &b).unwrap().c;
        let diff = (c2 - (c1 * 2.0).unwrap()).unwrap().abs().unwrap().max_all().unwrap();
        assert_eq!(diff.to_scalar::<f64>().unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let (_, a) = rand_tensor(7, (1, 4, 8));
        let (_, b) = rand_tensor(8, (1, 5, 8));
        assert!(matches!(fuse_context(&a, &b), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn stub_emits_fifty_steps() {
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        let enc = build_encoder_set("conv-stub", 16, vb).unwrap();
        let x = Tensor::zeros((2, SAMPLES_PER_CLIP), DType::F32, &Device::Cpu).unwrap();
        let ctx = context_encode(&x, enc.as_ref()).unwrap();
        assert_eq!(ctx.c.dims(), &[2, 50, 16]);
        assert_eq!(ctx.w_e.dims(), &[2, 16]);
        assert!(build_encoder_set("wav2vec", 16, VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu)).is_err());
    }
}
