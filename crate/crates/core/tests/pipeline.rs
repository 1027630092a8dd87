mod common;

use std::path::{Path, PathBuf};

use candle_core::Device;

use atl_diff::diffusion::UNetConfig;
use atl_diff::frames::{frame_file_name, list_frame_files, read_frame_dir};
use atl_diff::landmarks::LandmarkSequence;
use atl_diff::pipeline::{
    ablate, infer, ingest, load_diffusion_model, load_landmark_model, sample_id, train_diffusion, train_landmarks,
    write_synthetic_dataset, DatasetManifest, InferRequest, RunConfig, TimingRecord, MANIFEST_FILE,
};
use atl_diff::{Error, Exec};

struct Trained {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    cfg: RunConfig,
    landmarks: PathBuf,
    diffusion: PathBuf,
}

fn train_both(samples: usize, seconds: usize, seed: u64) -> Trained {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let cfg = common::tiny_config(seed);
    let manifest = common::synthetic_manifest(&root, samples, seconds, &cfg);
    let lm = train_landmarks(&manifest, &cfg, &root.join("lm")).unwrap();
    let d = train_diffusion(&manifest, &cfg, &lm.report.checkpoint, &root.join("diff"), Exec::default()).unwrap();
    Trained {
        _tmp: tmp,
        root,
        cfg,
        landmarks: lm.report.checkpoint,
        diffusion: d.report.checkpoint,
    }
}

fn run_infer(t: &Trained, sample: usize, out: &Path) -> (PathBuf, TimingRecord) {
    let raw = t.root.join("raw").join(sample_id(sample));
    let id_lm = out.with_extension("identity.json");
    LandmarkSequence::load(raw.join("landmarks.json"))
        .unwrap()
        .single_frame(0)
        .save(&id_lm)
        .unwrap();
    infer(
        &InferRequest {
            audio: &raw.join("audio.wav"),
            identity_image: &raw.join("frames").join(frame_file_name(0)),
            identity_landmarks: &id_lm,
            landmark_checkpoint: &t.landmarks,
            diffusion_checkpoint: &t.diffusion,
            out_dir: out,
        },
        &t.cfg,
        Exec::default(),
    )
    .unwrap()
}

#[test]
fn one_epoch_smoke_leaves_loadable_checkpoints() {
    let t = train_both(4, 1, 11);
    let dev = Device::Cpu;
    let (_, lcfg) = load_landmark_model(&t.landmarks, Some(&t.cfg.landmarks), &dev).unwrap();
    assert_eq!(lcfg, t.cfg.landmarks);
    let (_, dcfg) = load_diffusion_model(&t.diffusion, Some(&t.cfg.diffusion), &dev).unwrap();
    assert_eq!(dcfg.unet, t.cfg.diffusion.unet);
}

#[test]
fn ingest_splits_clips_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(12);
    let raw = tmp.path().join("raw");
    write_synthetic_dataset(&raw, 2, 2, cfg.data.image_size, cfg.seed).unwrap();
    // a sample without audio is skipped, not fatal
    std::fs::create_dir_all(raw.join("broken").join("frames")).unwrap();

    let out = tmp.path().join("data");
    let first = ingest(&raw, &out, &cfg, None, Exec::default()).unwrap();
    assert_eq!(first.entries.len(), 4, "two 2 s samples give two clips each");
    assert!(first.entries.iter().all(|e| e.sample != "broken"));
    assert_eq!(first.header.skipped.len(), 1);
    assert_eq!(first.header.skipped[0].id, "broken");
    let bytes = std::fs::read(out.join(MANIFEST_FILE)).unwrap();

    let second = ingest(&raw, &out, &cfg, None, Exec::default()).unwrap();
    assert_eq!(std::fs::read(out.join(MANIFEST_FILE)).unwrap(), bytes);
    assert_eq!(DatasetManifest::load(&out).unwrap(), second);
}

#[test]
fn infer_is_deterministic_with_thirty_frames_per_second() {
    let t = train_both(2, 1, 13);
    let (a, timing) = run_infer(&t, 0, &t.root.join("out_a"));
    let (b, _) = run_infer(&t, 0, &t.root.join("out_b"));
    assert_eq!(list_frame_files(&a).unwrap().len(), 30);
    assert_eq!(timing.steps, 8);
    assert_eq!(timing.clips, 1);
    assert!(timing.table_row().starts_with("| Ours (step = 8) |"));
    let size = t.cfg.data.image_size;
    assert_eq!(read_frame_dir(&a, size).unwrap(), read_frame_dir(&b, size).unwrap());
}

#[test]
fn mismatched_checkpoint_is_refused() {
    let t = train_both(2, 1, 14);
    let mut other = t.cfg.diffusion.clone();
    other.unet = UNetConfig {
        channels: [4, 8, 16],
        ..other.unet
    };
    let err = load_diffusion_model(&t.diffusion, Some(&other), &Device::Cpu).err().unwrap();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    let mut lm = t.cfg.landmarks.clone();
    lm.points += 1;
    assert!(load_landmark_model(&t.landmarks, Some(&lm), &Device::Cpu).is_err());
}

#[test]
fn ablation_table_has_one_row_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = common::tiny_config(15);
    cfg.ablation.variants = vec!["with KAN".into(), "with MLP".into()];
    let manifest = common::synthetic_manifest(tmp.path(), 2, 1, &cfg);
    let table = ablate(&manifest, &cfg, &tmp.path().join("ablation")).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.kan_le_mlp.is_some());
    assert_eq!(table.to_csv().lines().count(), 3);
}

#[test]
fn same_seed_trains_identically() {
    let run = |dir: &Path| {
        let cfg = common::tiny_config(16);
        let manifest = common::synthetic_manifest(dir, 2, 1, &cfg);
        train_landmarks(&manifest, &cfg, &dir.join("lm")).unwrap().report.losses
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}
