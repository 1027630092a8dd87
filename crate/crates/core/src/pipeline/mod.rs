//! Dataset ingest, training, inference, evaluation and ablation drivers.

mod ablation;
mod config;
mod dataset;
mod infer;
mod ingest;
mod manifest;
mod models;
mod synthetic;
mod tools;
mod train;

pub use ablation::{ablate, score_landmarks, AblationRow, AblationTable, ABLATION_CSV, ABLATION_JSON};
pub use config::{
    AblationConfig, DataConfig, DiffusionConfig, InferConfig, Paths, RunConfig, TimestepSampling, TrainConfig,
    ENV_DATA_ROOT, ENV_RAW_ROOT, ENV_RUN_DIR, SNAPSHOT_FILE,
};
pub use dataset::{landmark_batch, load_frame_clip, load_landmark_clip, FrameClip, LandmarkClip};
pub use infer::{
    gen_landmarks, infer, synthesize, teacher_forced_mae, valid_frames, Generated, InferRequest, Synthesizer, TimingRecord, FRAMES_DIR,
    LANDMARKS_FILE, TIMING_FILE,
};
pub use ingest::{ingest, Ffmpeg, VideoDecoder};
pub use manifest::{
    assign_splits, split_counts, DatasetManifest, ManifestEntry, ManifestHeader, Skipped, Split, MANIFEST_FILE,
    MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use models::{load_diffusion_model, load_landmark_model, DiffusionModel};
pub use synthetic::{sample_id, synthetic_sample, write_synthetic_dataset, SampleMeta, SyntheticSample};
pub use tools::{evaluate_dirs, render_masks, EvalRequest, MaskSummary, METRICS_CSV, METRICS_JSON};
pub use train::{
    cosine_lr, fit_landmarks, load_landmark_clips, train_diffusion, train_diffusion_with, train_landmarks, EpochHook, Stage, TrainReport,
    TrainedDiffusion, TrainedLandmarks, DIFFUSION_CHECKPOINT, LANDMARK_CHECKPOINT, NAN_DUMP,
};
