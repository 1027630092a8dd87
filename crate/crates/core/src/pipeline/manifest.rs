//! Line-delimited dataset manifest with a version header, and the seeded
//! train/val/test split.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, Error, Result};

pub const MANIFEST_FORMAT: &str = "atl-diff-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub image_size: usize,
    pub fps: usize,
    pub split_seed: u64,
    /// Raw samples seen, including skipped ones.
    pub samples: usize,
    pub clips: usize,
    pub skipped: Vec<Skipped>,
}

/// One 1-second clip. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// `<sample>-<clip:03>`
    pub id: String,
    pub sample: String,
    pub clip: usize,
    pub frames_dir: PathBuf,
    pub audio: PathBuf,
    pub landmarks: PathBuf,
    pub identity_image: PathBuf,
    pub identity_landmarks: PathBuf,
    /// Index of the identity frame within the source sample.
    pub identity_frame: usize,
    pub emotion: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| validation!("{} is empty", path.display()))?,
        )?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(validation!(
                "{} is a {} v{} manifest; expected {MANIFEST_FORMAT} v{MANIFEST_VERSION}",
                path.display(),
                header.format,
                header.version
            ));
        }
        let entries = lines.map(serde_json::from_str).collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        if entries.len() != header.clips {
            return Err(validation!(
                "manifest header lists {} clips but {} entries follow",
                header.clips,
                entries.len()
            ));
        }
        let root = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(Self { root, header, entries })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_jsonl()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// Entries of `split`, falling back to validation then training clips
    /// when it is empty (tiny desk-scale sets).
    pub fn split_or_fallback(&self, split: Split) -> Vec<&ManifestEntry> {
        [split, Split::Val, Split::Train]
            .into_iter()
            .map(|s| self.split(s))
            .find(|v| !v.is_empty())
            .unwrap_or_default()
    }
}

fn split_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// `(train, val, test)` counts: `test = round(f_test·N)`,
/// `val = round(f_val·(N − test))`, the rest train.
pub fn split_counts(n: usize, test_fraction: f64, val_fraction: f64) -> (usize, usize, usize) {
    let test = ((test_fraction * n as f64).round() as usize).min(n);
    let val = ((val_fraction * (n - test) as f64).round() as usize).min(n - test);
    (n - test - val, val, test)
}

/// Assigns each sample id a split by ordering ids on a seeded SHA-256 of
/// the id, independent of input order.
pub fn assign_splits(ids: &[String], seed: u64, test_fraction: f64, val_fraction: f64) -> HashMap<String, Split> {
    let mut keyed: Vec<([u8; 32], &String)> = ids.iter().map(|id| (split_key(seed, id), id)).collect();
    keyed.sort();
    keyed.dedup_by(|a, b| a.1 == b.1);
    let (_, val, test) = split_counts(keyed.len(), test_fraction, val_fraction);
    keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| {
            let s = if i < test {
                Split::Test
            } else if i < test + val {
                Split::Val
            } else {
                Split::Train
            };
            (id.clone(), s)
        })
        .collect()
}
