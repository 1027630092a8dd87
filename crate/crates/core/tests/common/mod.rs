#![allow(dead_code)]

use std::path::Path;

use atl_diff::diffusion::UNetConfig;
use atl_diff::pipeline::{ingest, write_synthetic_dataset, DatasetManifest, RunConfig, TrainConfig};
use atl_diff::Exec;

/// Narrow widths and 32×32 frames so both stages train in seconds per epoch.
pub fn tiny_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.data.image_size = 32;
    cfg.data.test_fraction = 0.0;
    cfg.data.val_fraction = 0.0;
    let lm = &mut cfg.landmarks;
    lm.decoder_width = 16;
    lm.face_width = 32;
    lm.mouth_width = 16;
    lm.recurrent_hidden = 32;
    lm.encoder_layers = 1;
    lm.heads = 2;
    lm.point_width = 2;
    lm.head_hidden = 16;
    lm.encoder_width = 16;
    cfg.diffusion.unet = UNetConfig {
        channels: [8, 16, 32],
        norm_groups: 4,
        time_dim: 16,
        image_size: 32,
    };
    let quick = TrainConfig {
        lr_max: 3e-3,
        lr_min: 3e-3,
        epochs: 1,
        batch_size: 2,
        steps_per_epoch: Some(1),
        keep_epoch_checkpoints: false,
    };
    cfg.train_landmarks = quick.clone();
    cfg.train_diffusion = quick.clone();
    cfg.ablation.train = quick;
    cfg
}

/// Writes `count` synthetic samples under `dir/raw` and ingests them into
/// `dir/data`.
pub fn synthetic_manifest(dir: &Path, count: usize, seconds: usize, cfg: &RunConfig) -> DatasetManifest {
    let raw = dir.join("raw");
    write_synthetic_dataset(&raw, count, seconds, cfg.data.image_size, cfg.seed).unwrap();
    ingest(&raw, &dir.join("data"), cfg, None, Exec::default()).unwrap()
}
