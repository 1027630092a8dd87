//! Dual-domain landmark extractor and KFusion reconstruction.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::rnn::{lstm, LSTMConfig, LSTM, RNN};
use candle_nn::{conv1d, conv1d_no_bias, linear, Conv1d, Conv1dConfig, Linear, VarBuilder};
use serde::{Deserialize, Serialize};

use super::{default_mouth_indices, validate_mouth, LandmarkSequence, DEFAULT_POINTS};
use crate::audio::{build_encoder_set, context_encode, AudioClip, ContextFeature, EncoderSet};

use crate::error::{contract, validation, Result};
use crate::kan::{GridConfig, HeadKind, PredictionHead};
use crate::nn::{interpolate_time, tile_time, DecoderLayer, TransformerEncoder};
use crate::{FRAMES_PER_CLIP, SAMPLES_PER_CLIP};

/// Which parts of the extractor and fusion are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainToggles {
    pub global: bool,
    pub context: bool,
    /// When off, all features are concatenated and linearly mapped to points.
    pub kfusion: bool,
}

impl Default for DomainToggles {
    fn default() -> Self {
        Self {
            global: true,
            context: true,
            kfusion: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandmarkConfig {
    pub points: usize,
    pub mouth: Vec<usize>,
    pub frames: usize,
    /// Raw-audio samples per patch token fed to the decoder.
    pub patch_size: usize,
    pub decoder_width: usize,
    pub decoder_layers: usize,
    pub face_width: usize,
    pub mouth_width: usize,
    pub recurrent_hidden: usize,
    pub encoder_layers: usize,
    pub heads: usize,
    /// Channels per landmark in the fused representation.
    pub point_width: usize,
    pub head: HeadKind,
    pub head_hidden: usize,
    pub grid: GridConfig,
    pub encoder_set: String,
    pub encoder_width: usize,
    pub toggles: DomainToggles,
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_POINTS,
            mouth: default_mouth_indices(),
            frames: FRAMES_PER_CLIP,
            patch_size: 320,
            decoder_width: 64,
            decoder_layers: 1,
            face_width: 128,
            mouth_width: 64,
            recurrent_hidden: 128,
            encoder_layers: 2,
            heads: 4,
            point_width: 4,
            head: HeadKind::Kan,
            head_hidden: 64,
            grid: GridConfig::default(),
            encoder_set: "conv-stub".into(),
            encoder_width: 64,
            toggles: DomainToggles::default(),
        }
    }
}

impl LandmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.frames == 0 {
            return Err(validation!("landmark count and frame count must be positive"));
        }
        validate_mouth(&self.mouth, self.points)?;
        if self.mouth.is_empty() {
            return Err(validation!("mouth index set is empty"));
        }
        if self.patch_size == 0 || SAMPLES_PER_CLIP % self.patch_size != 0 {
            return Err(validation!(
                "patch_size {} must divide {SAMPLES_PER_CLIP}",
                self.patch_size
            ));
        }
        for (name, w) in [
            ("decoder_width", self.decoder_width),
            ("face_width", self.face_width),
            ("mouth_width", self.mouth_width),
        ] {
            if w == 0 || w % self.heads.max(1) != 0 || self.heads == 0 {
                return Err(validation!("{name} {w} must be a positive multiple of heads {}", self.heads));
            }
        }
        if self.recurrent_hidden == 0 || self.point_width == 0 || self.head_hidden == 0 {
            return Err(validation!("widths must be positive"));
        }
        self.grid.validate()
    }

    pub fn fused_width(&self) -> usize {
        self.points * self.point_width
    }

    /// Number of patch tokens per clip.
    pub fn patches(&self) -> usize {
        SAMPLES_PER_CLIP / self.patch_size
    }
}

/// Named ablation variants of the landmark generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    WithoutKFusion,
    WithoutContext,
    WithoutGlobal,
    WithMlp,
    WithKan,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::WithoutKFusion,
        Variant::WithoutContext,
        Variant::WithoutGlobal,
        Variant::WithMlp,
        Variant::WithKan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::WithoutKFusion => "w/o KFusion",
            Variant::WithoutContext => "w/o Content Domain",
            Variant::WithoutGlobal => "w/o Global Domain",
            Variant::WithMlp => "with MLP",
            Variant::WithKan => "with KAN",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
                validation!("unknown ablation variant `{name}` (known: {})", known.join(", "))
            })
    }

    pub fn apply(self, base: &LandmarkConfig) -> LandmarkConfig {
        let mut cfg = base.clone();
        cfg.toggles = DomainToggles::default();
        match self {
            Variant::WithoutKFusion => cfg.toggles.kfusion = false,
            Variant::WithoutContext => cfg.toggles.context = false,
            Variant::WithoutGlobal => cfg.toggles.global = false,
            Variant::WithMlp => cfg.head = HeadKind::Mlp,
            Variant::WithKan => cfg.head = HeadKind::Kan,
        }
        cfg
    }
}

/// Extractor outputs, each `(B, F, width)`.
#[derive(Debug, Clone)]
pub struct DomainFeatures {
    pub g_f: Tensor,
    pub g_m: Tensor,
    pub c_f: Tensor,
    pub c_m: Tensor,
    pub c_ef: Tensor,
}

/// Test hook for the mouth write inside KFusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MouthInsert {
    Learned,
    Constant(f32),
    Skip,
}

fn conv_cfg(padding: usize) -> Conv1dConfig {
    Conv1dConfig {
        padding,
        ..Default::default()
    }
}

/// Applies a 1-D conv over time to `(B, T, C)` features.
fn conv_time(conv: &Conv1d, x: &Tensor) -> Result<Tensor> {
    let y = conv.forward(&x.transpose(1, 2)?.contiguous()?)?;
    Ok(y.transpose(1, 2)?.contiguous()?)
}

/// Purely linear 1×1 → 3-tap → 1×1 convolution over time.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    a: Conv1d,
    b: Conv1d,
    c: Conv1d,
}

impl ConvBlock {
    pub fn new(in_dim: usize, out_dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            a: conv1d(in_dim, out_dim, 1, conv_cfg(0), vb.pp("a"))?,
            b: conv1d(out_dim, out_dim, 3, conv_cfg(1), vb.pp("b"))?,
            c: conv1d(out_dim, out_dim, 1, conv_cfg(0), vb.pp("c"))?,
        })
    }

    /// `(B, T, in) → (B, T, out)`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.a.forward(&x.transpose(1, 2)?.contiguous()?)?;
        let y = self.c.forward(&self.b.forward(&y)?)?;
        Ok(y.transpose(1, 2)?.contiguous()?)
    }
}

/// [`ConvBlock`] plus a skip path; the skip is the identity when widths
/// match and a bias-free 1×1 projection otherwise.
#[derive(Debug, Clone)]
pub struct ResConvBlock {
    skip: Option<Conv1d>,
    block: ConvBlock,
}

impl ResConvBlock {
    pub fn new(in_dim: usize, out_dim: usize, vb: VarBuilder) -> Result<Self> {
        let skip = if in_dim == out_dim {
            None
        } else {
            Some(conv1d_no_bias(in_dim, out_dim, 1, conv_cfg(0), vb.pp("skip"))?)
        };
        Ok(Self {
            skip,
            block: ConvBlock::new(in_dim, out_dim, vb.pp("block"))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let skip = match &self.skip {
            None => x.clone(),
            Some(p) => conv_time(p, x)?,
        };
        Ok((skip + self.block.forward(x)?)?)
    }
}

/// Fixed scatter of per-mouth-point channels into the fused layout, where
/// point `p` owns channels `p·d..(p+1)·d`.
#[derive(Debug, Clone)]
pub struct MouthScatter {
    /// `(|L_m|·d, P·d)` selection matrix.
    select: Tensor,
    /// `(P·d,)` 1 on mouth channels.
    mask: Tensor,
}

impl MouthScatter {
    pub fn new(mouth: &[usize], points: usize, point_width: usize, device: &Device) -> Result<Self> {
        validate_mouth(mouth, points)?;
        let (rows, cols) = (mouth.len() * point_width, points * point_width);
        let mut s = vec![0f32; rows * cols];
        let mut m = vec![0f32; cols];
        for (i, &p) in mouth.iter().enumerate() {
            for k in 0..point_width {
                s[(i * point_width + k) * cols + p * point_width + k] = 1.0;
                m[p * point_width + k] = 1.0;
            }
        }
        Ok(Self {
            select: Tensor::from_vec(s, (rows, cols), device)?,
            mask: Tensor::from_vec(m, cols, device)?,
        })
    }

    /// Overwrites the mouth channels of `base (B, T, P·d)` with `mouth (B, T, |L_m|·d)`.
    pub fn insert(&self, base: &Tensor, mouth: &Tensor) -> Result<Tensor> {
        let (b, t, w) = base.dims3()?;
        let (rows, cols) = self.select.dims2()?;
        if w != cols || mouth.dims() != [b, t, rows] {
            return Err(contract!(
                "mouth insert expects base (_, _, {cols}) and mouth (_, _, {rows}), got {:?} and {:?}",
                base.dims(),
                mouth.dims()
            ));
        }
        let scattered = mouth.reshape((b * t, rows))?.matmul(&self.select)?.reshape((b, t, cols))?;
        let keep = (1.0 - &self.mask)?;
        Ok((base.broadcast_mul(&keep)? + scattered)?)
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }
}

/// Tile `v` over time, concatenate with `x`, 3-tap conv, transformer encoder.
#[derive(Debug, Clone)]
struct FuseEncode {
    conv: Conv1d,
    encoder: TransformerEncoder,
}

impl FuseEncode {
    fn new(in_dim: usize, width: usize, cfg: &LandmarkConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            conv: conv1d(in_dim, width, 3, conv_cfg(1), vb.pp("conv"))?,
            encoder: TransformerEncoder::new(width, cfg.heads, cfg.encoder_layers, vb.pp("encoder"))?,
        })
    }

    fn forward(&self, x: &Tensor, v: &Tensor) -> Result<Tensor> {
        let t = x.dim(1)?;
        let joined = Tensor::cat(&[x, &tile_time(v, t)?], D::Minus1)?;
        self.encoder.forward(&conv_time(&self.conv, &joined)?)
    }
}

/// Global domain: raw-audio patches decoded into `F` steps by learned
/// queries, then fused with the identity landmarks per branch.
#[derive(Debug, Clone)]
struct GlobalDomain {
    patch: Conv1d,
    patch_pos: Tensor,
    queries: Tensor,
    decoder: Vec<DecoderLayer>,
    face: FuseEncode,
    mouth: FuseEncode,
}

/// Context domain: recurrent branches over the fused encoder features plus
/// the emotion-face branch.
#[derive(Debug, Clone)]
struct ContextDomain {
    face_rnn: LSTM,
    face_proj: Linear,
    mouth_rnn: LSTM,
    mouth_proj: Linear,
    emotion_face: FuseEncode,
}

#[derive(Debug, Clone)]
enum Fusion {
    KFusion {
        rconv: ResConvBlock,
        conv: ConvBlock,
        mouth_conv: ConvBlock,
        scatter: MouthScatter,
        head: PredictionHead,
    },
    Concat(Linear),
}

pub struct LandmarkModel {
    cfg: LandmarkConfig,
    encoders: Box<dyn EncoderSet>,
    global: GlobalDomain,
    context: ContextDomain,
    fusion: Fusion,
}

/// Generator output for a batch.
#[derive(Debug, Clone)]
pub struct LandmarkOutput {
    /// `(B, F, P·2)` in `[0, 1]`
    pub coords: Tensor,
    /// `(B, D_e)` emotion embedding from the context encoders.
    pub w_e: Tensor,
}

impl LandmarkModel {
    pub fn new(cfg: &LandmarkConfig, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let encoders = build_encoder_set(&cfg.encoder_set, cfg.encoder_width, vb.pp("encoders"))?;
        let (p2, m2) = (cfg.points * 2, cfg.mouth.len() * 2);
        let dw = cfg.decoder_width;

        let g = vb.pp("global");
        let global = GlobalDomain {
            patch: conv1d(
                1,
                dw,
                cfg.patch_size,
                Conv1dConfig {
                    stride: cfg.patch_size,
                    ..Default::default()
                },
                g.pp("patch"),
            )?,
            patch_pos: g.get_with_hints((cfg.patches(), dw), "patch_pos", candle_nn::Init::Randn { mean: 0., stdev: 0.02 })?,
            queries: g.get_with_hints((cfg.frames, dw), "queries", candle_nn::Init::Randn { mean: 0., stdev: 0.02 })?,
            decoder: (0..cfg.decoder_layers)
                .map(|i| DecoderLayer::new(dw, cfg.heads, g.pp(format!("decoder{i}"))))
                .collect::<Result<_>>()?,
            face: FuseEncode::new(dw + p2, cfg.face_width, cfg, g.pp("face"))?,
            mouth: FuseEncode::new(dw + m2, cfg.mouth_width, cfg, g.pp("mouth"))?,
        };

        let c = vb.pp("context");
        let dc = encoders.width();
        let context = ContextDomain {
            face_rnn: lstm(dc, cfg.recurrent_hidden, LSTMConfig::default(), c.pp("face_rnn"))?,
            face_proj: linear(cfg.recurrent_hidden, cfg.face_width, c.pp("face_proj"))?,
            mouth_rnn: lstm(dc, cfg.recurrent_hidden, LSTMConfig::default(), c.pp("mouth_rnn"))?,
            mouth_proj: linear(cfg.recurrent_hidden, cfg.mouth_width, c.pp("mouth_proj"))?,
            emotion_face: FuseEncode::new(dc + p2, cfg.face_width, cfg, c.pp("emotion_face"))?,
        };

        let f = vb.pp("fusion");
        let (xf, xm) = (3 * cfg.face_width, 2 * cfg.mouth_width);
        let fusion = if cfg.toggles.kfusion {
            let w = cfg.fused_width();
            Fusion::KFusion {
                rconv: ResConvBlock::new(xf, w, f.pp("rconv"))?,
                conv: ConvBlock::new(xf, w, f.pp("conv"))?,
                mouth_conv: ConvBlock::new(xm, cfg.mouth.len() * cfg.point_width, f.pp("mouth_conv"))?,
                scatter: MouthScatter::new(&cfg.mouth, cfg.points, cfg.point_width, vb.device())?,
                head: PredictionHead::new(cfg.head, w, cfg.head_hidden, p2, cfg.grid, f.pp("head"))?,
            }
        } else {
            Fusion::Concat(linear(xf + xm, p2, f.pp("concat"))?)
        };

        Ok(Self {
            cfg: cfg.clone(),
            encoders,
            global,
            context,
            fusion,
        })
    }

    pub fn config(&self) -> &LandmarkConfig {
        &self.cfg
    }

    pub fn encoders(&self) -> &dyn EncoderSet {
        self.encoders.as_ref()
    }

    fn check_identity(&self, v: &Tensor) -> Result<usize> {
        let (b, w) = v.dims2()?;
        if w != self.cfg.points * 2 {
            return Err(validation!(
                "identity landmarks have width {w}, expected {}",
                self.cfg.points * 2
            ));
        }
        Ok(b)
    }

    /// `v (B, P·2)` restricted to the mouth points, `(B, |L_m|·2)`.
    pub fn mouth_of(&self, v: &Tensor) -> Result<Tensor> {
        let idx: Vec<u32> = self
            .cfg
            .mouth
            .iter()
            .flat_map(|&m| [2 * m as u32, 2 * m as u32 + 1])
            .collect();
        let idx = Tensor::new(idx.as_slice(), v.device())?;
        Ok(v.index_select(&idx, 1)?)
    }

    /// Shared decoder output `D(x)`, `(B, F, decoder_width)`.
    pub fn decode_audio(&self, samples: &Tensor) -> Result<Tensor> {
        let (b, n) = samples.dims2()?;
        if n != SAMPLES_PER_CLIP {
            return Err(validation!("expected {SAMPLES_PER_CLIP} samples per clip, got {n}"));
        }
        let g = &self.global;
        let tokens = g.patch.forward(&samples.unsqueeze(1)?)?.transpose(1, 2)?;
        let tokens = tokens.broadcast_add(&g.patch_pos)?;
        let q = g.queries.unsqueeze(0)?.broadcast_as((b, self.cfg.frames, self.cfg.decoder_width))?;
        g.decoder
            .iter()
            .try_fold(q.contiguous()?, |x, layer| layer.forward(&x, &tokens))
    }

    /// `g_f = E_f(Conv(D(x), v))`, `g_m = E_m(Conv(D(x), v_m))`.
    pub fn global_domain(&self, samples: &Tensor, v: &Tensor, v_m: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_identity(v)?;
        let expected = self.mouth_of(v)?;
        if v_m.dims() != expected.dims()
            || v_m.ne(&expected)?.to_dtype(DType::F32)?.sum_all()?.to_scalar::<f32>()? > 0.0
        {
            return Err(validation!("mouth landmarks are not the mouth subset of the identity landmarks"));
        }
        let d = self.decode_audio(samples)?;
        Ok((self.global.face.forward(&d, v)?, self.global.mouth.forward(&d, v_m)?))
    }

    /// `(c_f, c_m, c_ef)`, each resampled to `F` steps.
    pub fn context_domain(&self, feat: &ContextFeature, v: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let b = self.check_identity(v)?;
        let (cb, _, dc) = feat.c.dims3()?;
        if cb != b || dc != self.encoders.width() {
            return Err(contract!(
                "context features {:?} do not match batch {b} and width {}",
                feat.c.dims(),
                self.encoders.width()
            ));
        }
        let ctx = &self.context;
        let f = self.cfg.frames;
        let face = ctx.face_proj.forward(&recur(&ctx.face_rnn, &feat.c)?)?;
        let mouth = ctx.mouth_proj.forward(&recur(&ctx.mouth_rnn, &feat.c)?)?;
        let ef = ctx.emotion_face.forward(&feat.c, v)?;
        Ok((
            interpolate_time(&face, f)?,
            interpolate_time(&mouth, f)?,
            interpolate_time(&ef, f)?,
        ))
    }

    /// Runs both domains, honouring the toggles; disabled domains yield zeros.
    pub fn extract(&self, samples: &Tensor, v: &Tensor) -> Result<(DomainFeatures, Tensor)> {
        let b = self.check_identity(v)?;
        let feat = context_encode(samples, self.encoders.as_ref())?;
        let zeros = |w: usize| Tensor::zeros((b, self.cfg.frames, w), DType::F32, samples.device());
        let (g_f, g_m) = if self.cfg.toggles.global {
            self.global_domain(samples, v, &self.mouth_of(v)?)?
        } else {
            (zeros(self.cfg.face_width)?, zeros(self.cfg.mouth_width)?)
        };
        let (c_f, c_m, c_ef) = if self.cfg.toggles.context {
            self.context_domain(&feat, v)?
        } else {
            let fw = self.cfg.face_width;
            (zeros(fw)?, zeros(self.cfg.mouth_width)?, zeros(fw)?)
        };
        Ok((DomainFeatures { g_f, g_m, c_f, c_m, c_ef }, feat.w_e))
    }

    /// Fused features at the insertion layer (`None` without KFusion) and
    /// the squashed coordinates `(B, F, P·2)`.
    pub fn kfusion_with(&self, d: &DomainFeatures, insert: MouthInsert) -> Result<(Option<Tensor>, Tensor)> {
        let x_m = concat_checked(&[&d.c_m, &d.g_m], "mouth")?;
        let x_f = concat_checked(&[&d.c_f, &d.c_ef, &d.g_f], "face")?;
        let expect = (3 * self.cfg.face_width, 2 * self.cfg.mouth_width);
        if (x_f.dim(2)?, x_m.dim(2)?) != expect {
            return Err(contract!(
                "fused widths ({}, {}) differ from configured {expect:?}",
                x_f.dim(2)?,
                x_m.dim(2)?
            ));
        }
        let (b, f, _) = x_f.dims3()?;
        match &self.fusion {
            Fusion::KFusion {
                rconv,
                conv,
                mouth_conv,
                scatter,
                head,
            } => {
                let fused = (rconv.forward(&x_f)? * conv.forward(&x_f)?)?;
                let fused = match insert {
                    MouthInsert::Skip => fused,
                    MouthInsert::Learned => scatter.insert(&fused, &mouth_conv.forward(&x_m)?)?,
                    MouthInsert::Constant(s) => {
                        let w = self.cfg.mouth.len() * self.cfg.point_width;
                        scatter.insert(&fused, &Tensor::full(s, (b, f, w), fused.device())?)?
                    }
                };
                let w = fused.dim(2)?;
                let y = head.forward(&fused.reshape((b * f, w))?)?;
                let coords = candle_nn::ops::sigmoid(&y)?.reshape((b, f, self.cfg.points * 2))?;
                Ok((Some(fused), coords))
            }
            Fusion::Concat(lin) => {
                let x = Tensor::cat(&[&x_f, &x_m], D::Minus1)?;
                Ok((None, candle_nn::ops::sigmoid(&lin.forward(&x)?)?))
            }
        }
    }

    pub fn kfusion(&self, d: &DomainFeatures) -> Result<Tensor> {
        Ok(self.kfusion_with(d, MouthInsert::Learned)?.1)
    }

    /// `samples (B, 16000)`, identity landmarks `v (B, P·2)`.
    pub fn forward(&self, samples: &Tensor, v: &Tensor) -> Result<LandmarkOutput> {
        let (d, w_e) = self.extract(samples, v)?;
        Ok(LandmarkOutput {
            coords: self.kfusion(&d)?,
            w_e,
        })
    }

    /// Emotion embedding only, `(B, D_e)`.
    pub fn emotion_embedding(&self, samples: &Tensor) -> Result<Tensor> {
        Ok(context_encode(samples, self.encoders.as_ref())?.w_e)
    }
}

fn recur(rnn: &LSTM, x: &Tensor) -> Result<Tensor> {
    let states = rnn.seq(x)?;
    Ok(rnn.states_to_tensor(&states)?)
}

fn concat_checked(parts: &[&Tensor], what: &str) -> Result<Tensor> {
    let head = parts[0].dims3()?;
    for p in parts {
        let (b, t, _) = p.dims3()?;
        if (b, t) != (head.0, head.1) {
            return Err(contract!("{what} features disagree on batch/time: {:?}", p.dims()));
        }
    }
    Ok(Tensor::cat(parts, D::Minus1)?)
}

/// Predicts the landmark sequence for one clip from a single identity frame.
pub fn generate_landmarks(
    model: &LandmarkModel,
    clip: &AudioClip,
    identity: &LandmarkSequence,
    device: &Device,
) -> Result<LandmarkSequence> {
    let cfg = model.config();
    if identity.frames() != 1 || identity.points() != cfg.points {
        return Err(validation!(
            "identity landmarks must be one frame of {} points, got {}×{}",
            cfg.points,
            identity.frames(),
            identity.points()
        ));
    }
    let samples = Tensor::from_slice(&clip.wave.samples, (1, SAMPLES_PER_CLIP), device)?;
    let v = identity.to_tensor(device)?;
    let out = model.forward(&samples, &v)?.coords;
    let flat: Vec<f32> = out.flatten_all()?.to_vec1()?;
    LandmarkSequence::from_flat(cfg.frames, cfg.points, &flat, cfg.mouth.clone())
}

#[cfg(test)]
#[path = "model_tests.rs"]
mod tests;
