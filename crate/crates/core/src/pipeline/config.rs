//! Run configuration: one TOML file, with environment overrides for paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{BetaSchedule, DiffusionSchedule, Parameterization, UNetConfig};
use crate::error::{validation, Error, Result};
use crate::landmarks::LandmarkConfig;
use crate::noise_guide::GuideConfig;

/// Environment variables that override `[paths]` entries.
pub const ENV_RAW_ROOT: &str = "ATLDIFF_RAW_ROOT";
pub const ENV_DATA_ROOT: &str = "ATLDIFF_DATA_ROOT";
pub const ENV_RUN_DIR: &str = "ATLDIFF_RUN_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw samples, one directory per sample id.
    pub raw_root: PathBuf,
    /// Ingested clips and `manifest.jsonl`.
    pub data_root: PathBuf,
    /// Checkpoints, snapshots and reports.
    pub run_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            raw_root: "data/raw".into(),
            data_root: "data/clips".into(),
            run_dir: "runs/default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Stored frame resolution after ingestion.
    pub image_size: usize,
    pub fps: usize,
    pub split_seed: u64,
    pub test_fraction: f64,
    /// Fraction of the non-test samples held out for validation.
    pub val_fraction: f64,
    /// Emotion label vocabulary; empty accepts any label.
    pub emotion_labels: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            fps: 30,
            split_seed: 0,
            test_fraction: 0.1,
            val_fraction: 0.1,
            emotion_labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestepSampling {
    /// Uniform over all training steps.
    Uniform,
    /// Uniform over the inference subset only.
    Inference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub unet: UNetConfig,
    pub train_steps: usize,
    pub inference_steps: usize,
    pub beta: BetaSchedule,
    pub timestep_sampling: TimestepSampling,
    pub parameterization: Parameterization,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            unet: UNetConfig::default(),
            train_steps: 1000,
            inference_steps: 8,
            beta: BetaSchedule::default(),
            timestep_sampling: TimestepSampling::Uniform,
            parameterization: Parameterization::Epsilon,
        }
    }
}

impl DiffusionConfig {
    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.train_steps, self.inference_steps, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Optimizer steps per epoch; defaults to one pass over the train split.
    pub steps_per_epoch: Option<usize>,
    /// Keep `<stage>_epochNNNN.safetensors` besides the rolling latest.
    pub keep_epoch_checkpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 1e-4,
            lr_min: 1e-6,
            epochs: 300,
            batch_size: 4,
            steps_per_epoch: None,
            keep_epoch_checkpoints: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self, name: &str) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.steps_per_epoch == Some(0) {
            return Err(validation!("[{name}] epochs, batch_size and steps_per_epoch must be positive"));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(validation!("[{name}] needs 0 < lr_min <= lr_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// Clips denoised together.
    pub batch_size: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self { batch_size: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub variants: Vec<String>,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            variants: crate::landmarks::Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub landmarks: LandmarkConfig,
    pub guide: GuideConfig,
    pub diffusion: DiffusionConfig,
    pub train_landmarks: TrainConfig,
    pub train_diffusion: TrainConfig,
    pub infer: InferConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            data: DataConfig::default(),
            landmarks: LandmarkConfig::default(),
            guide: GuideConfig::default(),
            diffusion: DiffusionConfig::default(),
            train_landmarks: TrainConfig::default(),
            train_diffusion: TrainConfig::default(),
            infer: InferConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.image_size == 0 || d.fps == 0 {
            return Err(validation!("[data] image_size and fps must be positive"));
        }
        if d.fps != crate::FRAMES_PER_CLIP {
            return Err(validation!(
                "[data] fps must be {} so one-second clips hold {} frames",
                crate::FRAMES_PER_CLIP,
                crate::FRAMES_PER_CLIP
            ));
        }
        for (name, f) in [("test_fraction", d.test_fraction), ("val_fraction", d.val_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(validation!("[data] {name} must lie in [0, 1)"));
            }
        }
        self.landmarks.validate()?;
        if self.landmarks.frames != crate::FRAMES_PER_CLIP {
            return Err(validation!("[landmarks] frames must be {}", crate::FRAMES_PER_CLIP));
        }
        self.guide.validate()?;
        self.diffusion.unet.validate()?;
        self.diffusion.schedule()?;
        if self.diffusion.unet.time_dim != self.landmarks.encoder_width {
            return Err(validation!(
                "[diffusion.unet] time_dim {} must equal the emotion width [landmarks] encoder_width {}",
                self.diffusion.unet.time_dim,
                self.landmarks.encoder_width
            ));
        }
        self.train_landmarks.validate("train_landmarks")?;
        self.train_diffusion.validate("train_diffusion")?;
        self.ablation.train.validate("ablation.train")?;
        for v in &self.ablation.variants {
            crate::landmarks::Variant::parse(v)?;
        }
        if self.infer.batch_size == 0 {
            return Err(validation!("[infer] batch_size must be positive"));
        }
        Ok(())
    }

    /// Parses and validates TOML text without applying overrides.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, applies path overrides from the environment and
    /// validates the result.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env(|k| std::env::var_os(k));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<std::ffi::OsString>) {
        if let Some(v) = get(ENV_RAW_ROOT) {
            self.paths.raw_root = v.into();
        }
        if let Some(v) = get(ENV_DATA_ROOT) {
            self.paths.data_root = v.into();
        }
        if let Some(v) = get(ENV_RUN_DIR) {
            self.paths.run_dir = v.into();
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes `config.toml` into `dir`.
    pub fn write_snapshot(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub const SNAPSHOT_FILE: &str = "config.toml";
