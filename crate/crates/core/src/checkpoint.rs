//! Named-tensor checkpoints (safetensors) with an embedded metadata record.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{VarBuilder, VarMap};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "atl-diff";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointKind {
    Landmarks,
    Diffusion,
}

/// Metadata stored in the safetensors header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub kind: CheckpointKind,
    /// Model configuration the tensors were built with.
    pub model: serde_json::Value,
    pub epoch: Option<usize>,
}

impl CheckpointMeta {
    pub fn new(kind: CheckpointKind, model: &impl Serialize, epoch: Option<usize>) -> Result<Self> {
        Ok(Self {
            version: FORMAT_VERSION,
            kind,
            model: serde_json::to_value(model)?,
            epoch,
        })
    }

    pub fn model_config<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.model.clone())?)
    }
}

/// A loaded checkpoint: detached tensors plus metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: HashMap<String, Tensor>,
}

impl Checkpoint {
    /// Frozen builder: tensors carry no gradient tracking.
    pub fn builder(&self, device: &Device) -> VarBuilder<'static> {
        VarBuilder::from_tensors(self.tensors.clone(), DType::F32, device)
    }

    pub fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.meta.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind:?} checkpoint, found {:?}",
                self.meta.kind
            )));
        }
        Ok(())
    }
}

pub fn save(path: impl AsRef<Path>, vars: &VarMap, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    let tensors: Vec<(String, Tensor)> = {
        let data = vars.data().lock().expect("var map lock poisoned");
        data.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect()
    };
    let mut info = HashMap::new();
    info.insert("format".to_string(), FORMAT.to_string());
    info.insert("meta".to_string(), serde_json::to_string(meta)?);
    safetensors::serialize_to_file(tensors, Some(info), path)
        .map_err(|e| Error::Checkpoint(format!("writing {}: {e}", path.display())))
}

pub fn load(path: impl AsRef<Path>, device: &Device) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, header) = safetensors::SafeTensors::read_metadata(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let info = header
        .metadata()
        .as_ref()
        .ok_or_else(|| Error::Checkpoint(format!("{} has no metadata", path.display())))?;
    if info.get("format").map(String::as_str) != Some(FORMAT) {
        return Err(Error::Checkpoint(format!("{} is not an {FORMAT} checkpoint", path.display())));
    }
    let meta: CheckpointMeta = serde_json::from_str(
        info.get("meta")
            .ok_or_else(|| Error::Checkpoint("missing meta record".into()))?,
    )?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} is not supported (expected {FORMAT_VERSION})",
            meta.version
        )));
    }
    let tensors = candle_core::safetensors::load_buffer(&bytes, device)?;
    Ok(Checkpoint { meta, tensors })
}

/// Detached copies of every variable, for inference without autograd.
pub fn frozen(vars: &VarMap) -> HashMap<String, Tensor> {
    let data = vars.data().lock().expect("var map lock poisoned");
    data.iter().map(|(k, v)| (k.clone(), v.as_tensor().detach())).collect()
}

pub fn frozen_builder(vars: &VarMap, device: &Device) -> VarBuilder<'static> {
    VarBuilder::from_tensors(frozen(vars), DType::F32, device)
}

/// Copies checkpoint tensors into an existing var map (for resuming).
pub fn restore(vars: &VarMap, ckpt: &Checkpoint) -> Result<()> {
    let data = vars.data().lock().expect("var map lock poisoned");
    for (name, var) in data.iter() {
        let t = ckpt
            .tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks tensor `{name}`")))?;
        var.set(t)?;
    }
    Ok(())
}
