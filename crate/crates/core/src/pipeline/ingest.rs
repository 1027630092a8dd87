//! Raw samples to fixed-size clips.
//!
//! Raw layout, one directory per sample id:
//! `frames/*.png` (30 FPS) or a `video.*` file decoded by a [`VideoDecoder`],
//! `audio.wav` (any rate, mono or stereo; optional when a video supplies it),
//! `landmarks.json` (one entry per frame) and optionally `meta.json`.

use std::path::{Path, PathBuf};
use std::process::Command;

use super::config::RunConfig;
use super::manifest::{
    assign_splits, DatasetManifest, ManifestEntry, ManifestHeader, Skipped, MANIFEST_FORMAT, MANIFEST_VERSION,
};
use super::synthetic::SampleMeta;
use crate::audio::{load_audio, segment_clips, write_wav};
use crate::error::{validation, Error, Result};
use crate::exec::Exec;
use crate::frames::{list_frame_files, write_frame_dir, RgbFrame};
use crate::landmarks::LandmarkSequence;
use crate::FRAMES_PER_CLIP;

/// External decoder for container video.
pub trait VideoDecoder: Send + Sync {
    /// Writes frames at `fps` as PNGs into `frames_dir` and the soundtrack
    /// as WAV to `audio_out`.
    fn decode(&self, video: &Path, fps: usize, frames_dir: &Path, audio_out: &Path) -> Result<()>;
}

/// Decodes through the `ffmpeg` executable.
#[derive(Debug, Clone)]
pub struct Ffmpeg {
    pub program: PathBuf,
}

impl Default for Ffmpeg {
    fn default() -> Self {
        Self {
            program: "ffmpeg".into(),
        }
    }
}

impl VideoDecoder for Ffmpeg {
    fn decode(&self, video: &Path, fps: usize, frames_dir: &Path, audio_out: &Path) -> Result<()> {
        std::fs::create_dir_all(frames_dir).map_err(|e| Error::io(frames_dir, e))?;
        let run = |args: &[&std::ffi::OsStr]| -> Result<()> {
            let status = Command::new(&self.program)
                .args(["-loglevel", "error", "-y", "-i"])
                .arg(video)
                .args(args)
                .status()
                .map_err(|e| Error::io(&self.program, e))?;
            if !status.success() {
                return Err(validation!("{} failed on {}", self.program.display(), video.display()));
            }
            Ok(())
        };
        let pattern = frames_dir.join("frame_%05d.png");
        let vf = format!("fps={fps}");
        run(&["-vf".as_ref(), vf.as_ref(), "-start_number".as_ref(), "0".as_ref(), pattern.as_os_str()])?;
        run(&["-vn".as_ref(), "-ac".as_ref(), "1".as_ref(), "-ar".as_ref(), "16000".as_ref(), audio_out.as_os_str()])
    }
}

fn find_video(dir: &Path) -> Option<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_stem().is_some_and(|s| s == "video"))
        .collect();
    found.sort();
    found.into_iter().next()
}

fn clip_id(sample: &str, clip: usize) -> String {
    format!("{sample}-{clip:03}")
}

/// Processes one raw sample into clip directories; entries carry a
/// placeholder split.
fn ingest_sample(
    dir: &Path,
    id: &str,
    out_root: &Path,
    cfg: &RunConfig,
    decoder: Option<&dyn VideoDecoder>,
) -> Result<Vec<ManifestEntry>> {
    let meta_path = dir.join("meta.json");
    let meta: SampleMeta = if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        serde_json::from_str(&text)?
    } else {
        SampleMeta {
            emotion: "unknown".into(),
            identity_frame: 0,
        }
    };
    let labels = &cfg.data.emotion_labels;
    if !labels.is_empty() && !labels.contains(&meta.emotion) {
        return Err(validation!("emotion `{}` is not in the configured label set", meta.emotion));
    }

    let mut frames_dir = dir.join("frames");
    let mut audio_path = dir.join("audio.wav");
    if !frames_dir.is_dir() {
        let video = find_video(dir).ok_or_else(|| validation!("no frames/ directory and no video file"))?;
        let decoder = decoder.ok_or_else(|| validation!("video {} needs a decoder", video.display()))?;
        let scratch = out_root.join("decoded").join(id);
        frames_dir = scratch.join("frames");
        let decoded_audio = scratch.join("audio.wav");
        decoder.decode(&video, cfg.data.fps, &frames_dir, &decoded_audio)?;
        if !audio_path.exists() {
            audio_path = decoded_audio;
        }
    }

    let files = list_frame_files(&frames_dir)?;
    let landmarks = LandmarkSequence::load(dir.join("landmarks.json"))?;
    if landmarks.frames() < files.len() {
        return Err(validation!(
            "{} frames but landmarks for only {}",
            files.len(),
            landmarks.frames()
        ));
    }
    let audio = load_audio(&audio_path)?;
    let audio_clips = segment_clips(&audio)?;
    let n_clips = (files.len() / FRAMES_PER_CLIP).min(audio_clips.len());
    if n_clips == 0 {
        return Err(validation!(
            "needs at least {FRAMES_PER_CLIP} frames and some audio, found {} frames",
            files.len()
        ));
    }
    if meta.identity_frame >= files.len() {
        return Err(validation!("identity frame {} out of range", meta.identity_frame));
    }

    let size = cfg.data.image_size;
    let ident_dir = out_root.join("identity");
    std::fs::create_dir_all(&ident_dir).map_err(|e| Error::io(&ident_dir, e))?;
    let identity_image = PathBuf::from("identity").join(format!("{id}.png"));
    let identity_landmarks = PathBuf::from("identity").join(format!("{id}.landmarks.json"));
    RgbFrame::load(&files[meta.identity_frame], size)?.save_png(out_root.join(&identity_image))?;
    landmarks
        .single_frame(meta.identity_frame)
        .save(out_root.join(&identity_landmarks))?;

    let mut entries = Vec::with_capacity(n_clips);
    for (k, clip) in audio_clips.iter().take(n_clips).enumerate() {
        let cid = clip_id(id, k);
        let rel = PathBuf::from("clips").join(&cid);
        let abs = out_root.join(&rel);
        let start = k * FRAMES_PER_CLIP;
        let frames = files[start..start + FRAMES_PER_CLIP]
            .iter()
            .map(|f| RgbFrame::load(f, size))
            .collect::<Result<Vec<_>>>()?;
        write_frame_dir(abs.join("frames"), &frames, 0)?;
        write_wav(abs.join("audio.wav"), &clip.wave)?;
        landmarks.window(start, FRAMES_PER_CLIP)?.save(abs.join("landmarks.json"))?;
        entries.push(ManifestEntry {
            id: cid,
            sample: id.to_string(),
            clip: k,
            frames_dir: rel.join("frames"),
            audio: rel.join("audio.wav"),
            landmarks: rel.join("landmarks.json"),
            identity_image: identity_image.clone(),
            identity_landmarks: identity_landmarks.clone(),
            identity_frame: meta.identity_frame,
            emotion: meta.emotion.clone(),
            split: super::manifest::Split::Train,
        });
    }
    Ok(entries)
}

/// Ingests every sample directory under `raw_root` into `out_root` and
/// writes `manifest.jsonl`. Samples that fail are listed in the header's
/// `skipped` record. Output depends only on the inputs and the config.
pub fn ingest(
    raw_root: &Path,
    out_root: &Path,
    cfg: &RunConfig,
    decoder: Option<&dyn VideoDecoder>,
    exec: Exec,
) -> Result<DatasetManifest> {
    let mut dirs: Vec<(String, PathBuf)> = std::fs::read_dir(raw_root)
        .map_err(|e| Error::io(raw_root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    dirs.sort();
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;

    let results = exec.map(&dirs, |(id, dir)| ingest_sample(dir, id, out_root, cfg, decoder));
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut kept_ids = Vec::new();
    for ((id, _), r) in dirs.iter().zip(results) {
        match r {
            Ok(e) => {
                kept_ids.push(id.clone());
                entries.extend(e);
            }
            Err(e) => {
                log::warn!("skipping sample {id}: {e}");
                skipped.push(Skipped {
                    id: id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let splits = assign_splits(&kept_ids, cfg.data.split_seed, cfg.data.test_fraction, cfg.data.val_fraction);
    for e in &mut entries {
        e.split = splits[&e.sample];
    }
    let manifest = DatasetManifest {
        root: out_root.to_path_buf(),
        header: ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            image_size: cfg.data.image_size,
            fps: cfg.data.fps,
            split_seed: cfg.data.split_seed,
            samples: dirs.len(),
            clips: entries.len(),
            skipped,
        },
        entries,
    };
    manifest.save()?;
    Ok(manifest)
}
