//! Landmark-generator ablations: one stage-1 run per variant, scored by
//! LMD and M-LMD on held-out clips.

use std::path::Path;

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::{landmark_batch, LandmarkClip};
use super::manifest::{DatasetManifest, Split};
use super::train::{fit_landmarks, load_landmark_clips};
use crate::error::{validation, Error, Result};
use crate::landmarks::{LandmarkModel, LandmarkSequence, Variant};
use crate::metrics::{lmd, m_lmd};

pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub lmd: f64,
    pub m_lmd: f64,
    pub final_loss: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Clips the rows were scored on.
    pub eval_clips: usize,
    /// `LMD(with KAN) ≤ LMD(with MLP)` when both variants ran.
    pub kan_le_mlp: Option<bool>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v.name())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,lmd,m_lmd,final_loss\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.variant, r.lmd, r.m_lmd, r.final_loss));
        }
        s
    }
}

/// Mean LMD and M-LMD over `clips`, in pixels of an `image_size` frame.
pub fn score_landmarks(model: &LandmarkModel, clips: &[LandmarkClip], image_size: usize) -> Result<(f64, f64)> {
    if clips.is_empty() {
        return Err(validation!("no clips to score"));
    }
    let dev = Device::Cpu;
    let cfg = model.config();
    let (mut total, mut mouth) = (0.0, 0.0);
    for clip in clips {
        let (x, v, _) = landmark_batch(&[clip], &dev)?;
        let flat: Vec<f32> = model.forward(&x, &v)?.coords.flatten_all()?.to_vec1()?;
        let pred = LandmarkSequence::from_flat(cfg.frames, cfg.points, &flat, cfg.mouth.clone())?;
        total += lmd(&pred, &clip.target, None, image_size)?;
        mouth += m_lmd(&pred, &clip.target, image_size)?;
    }
    let n = clips.len() as f64;
    Ok((total / n, mouth / n))
}

/// Trains every configured variant from the same seed and writes
/// `ablation.json` and `ablation.csv` into `run_dir`.
pub fn ablate(manifest: &DatasetManifest, cfg: &RunConfig, run_dir: &Path) -> Result<AblationTable> {
    cfg.validate()?;
    cfg.write_snapshot(run_dir)?;
    let variants = cfg
        .ablation
        .variants
        .iter()
        .map(|v| Variant::parse(v))
        .collect::<Result<Vec<_>>>()?;
    let train = load_landmark_clips(manifest, Split::Train, &cfg.landmarks)?;
    let held_out: Vec<LandmarkClip> = manifest
        .split_or_fallback(Split::Test)
        .into_iter()
        .map(|e| super::dataset::load_landmark_clip(manifest, e, &cfg.landmarks))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for v in variants {
        let vcfg = v.apply(&cfg.landmarks);
        let dir = run_dir.join(v.name().replace(['/', ' '], "_"));
        let trained = fit_landmarks(&train, &vcfg, &cfg.ablation.train, cfg.seed, &dir)?;
        let (l, m) = score_landmarks(&trained.model, &held_out, cfg.data.image_size)?;
        log::info!("{}: LMD {l:.4}, M-LMD {m:.4}", v.name());
        rows.push(AblationRow {
            variant: v.name().to_string(),
            lmd: l,
            m_lmd: m,
            final_loss: trained.report.final_loss().unwrap_or(f32::NAN),
        });
    }
    let mut table = AblationTable {
        rows,
        eval_clips: held_out.len(),
        kan_le_mlp: None,
    };
    table.kan_le_mlp = match (table.row(Variant::WithKan), table.row(Variant::WithMlp)) {
        (Some(k), Some(m)) => Some(k.lmd <= m.lmd),
        _ => None,
    };
    let json = run_dir.join(ABLATION_JSON);
    std::fs::write(&json, serde_json::to_string_pretty(&table)?).map_err(|e| Error::io(&json, e))?;
    let csv = run_dir.join(ABLATION_CSV);
    std::fs::write(&csv, table.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok(table)
}
