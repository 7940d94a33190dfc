//! Checkpoints: every named parameter tensor plus a metadata record echoing
//! the run configuration and training stage, stored as safetensors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use candle_core::Tensor;
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use socialgaze_core::config::RunConfig;

use crate::error::{ModelError, Result};
use crate::model::SocialGazeModel;

pub const CHECKPOINT_FORMAT: &str = "socialgaze-ckpt-1";
const META_KEY: &str = "socialgaze";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Frame-level training of the static model.
    One,
    /// Temporal fine-tuning with a frozen scene encoder.
    Two,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::One => "stage1",
            Stage::Two => "stage2",
        })
    }
}

impl FromStr for Stage {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stage1" | "1" => Ok(Stage::One),
            "stage2" | "2" => Ok(Stage::Two),
            _ => Err(ModelError::validation(format!("unknown stage `{s}` (expected stage1 or stage2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub stage: Stage,
    pub steps: usize,
    pub config_hash: String,
    /// Every configuration key with its value.
    pub config: BTreeMap<String, String>,
}

fn checkpoint_err(e: impl fmt::Display) -> ModelError {
    ModelError::Checkpoint(e.to_string())
}

/// Serializes all parameters (in name order) and the metadata record.
pub fn to_bytes(model: &SocialGazeModel, stage: Stage, steps: usize) -> Result<Vec<u8>> {
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        stage,
        steps,
        config_hash: model.config.hash(),
        config: model.config.entries(),
    };
    // A single metadata entry keeps the header byte-stable.
    let info = HashMap::from([(META_KEY.to_string(), serde_json::to_string(&meta)?)]);
    let vars = model.params.vars();
    let tensors: Vec<(String, Tensor)> = vars.iter().map(|(n, v)| (n.clone(), v.as_tensor().clone())).collect();
    safetensors::serialize(tensors.iter().map(|(n, t)| (n.as_str(), t)), Some(info)).map_err(checkpoint_err)
}

pub fn save(model: &SocialGazeModel, stage: Stage, steps: usize, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_bytes(model, stage, steps)?)?;
    Ok(())
}

pub fn read_meta(bytes: &[u8]) -> Result<CheckpointMeta> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(checkpoint_err)?;
    let text = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| ModelError::Checkpoint("missing socialgaze metadata".into()))?;
    let meta: CheckpointMeta = serde_json::from_str(text)?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(socialgaze_core::Error::SchemaMismatch {
            expected: CHECKPOINT_FORMAT.into(),
            found: meta.format,
        }
        .into());
    }
    Ok(meta)
}

/// Rebuilds the model from the echoed configuration and loads its weights.
pub fn from_bytes(bytes: &[u8]) -> Result<(SocialGazeModel, CheckpointMeta)> {
    let meta = read_meta(bytes)?;
    let config = RunConfig::from_entries(&meta.config)?;
    if config.hash() != meta.config_hash {
        return Err(ModelError::Checkpoint("config hash does not match the stored configuration".into()));
    }
    let model = SocialGazeModel::new(&config)?;
    let tensors = candle_core::safetensors::load_buffer(bytes, model.params.device())?;
    load_weights(&model, &tensors, true)?;
    Ok((model, meta))
}

pub fn load(path: &Path) -> Result<(SocialGazeModel, CheckpointMeta)> {
    from_bytes(&std::fs::read(path)?)
}

/// Copies named tensors into the model. With `exact`, extra or missing names
/// are errors; otherwise every model parameter must still be provided.
pub fn load_weights(model: &SocialGazeModel, tensors: &HashMap<String, Tensor>, exact: bool) -> Result<()> {
    let names = model.params.names();
    for n in &names {
        let t = tensors
            .get(n)
            .ok_or_else(|| ModelError::Checkpoint(format!("checkpoint lacks parameter `{n}`")))?;
        model.params.set(n, t).map_err(checkpoint_err)?;
    }
    if exact && tensors.len() != names.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint holds {} tensors, the model has {}",
            tensors.len(),
            names.len()
        )));
    }
    Ok(())
}

/// Parameter snapshot of a model, by name.
pub fn snapshot(model: &SocialGazeModel) -> Result<HashMap<String, Tensor>> {
    model
        .params
        .vars()
        .into_iter()
        .map(|(n, v)| Ok((n, v.as_tensor().copy()?)))
        .collect()
}
