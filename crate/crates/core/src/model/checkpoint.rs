use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hybrid::{HybridModel, RunningStats};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::normalization::LabelNormalizer;

pub const CHECKPOINT_FORMAT: &str = "qhybrid-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON snapshot of a trained model and the preprocessing
/// needed to feed it new samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<f64>,
    pub running_stats: RunningStats,
    /// Gene columns the encoder expects, in order.
    pub genes: Vec<String>,
    pub label_normalizer: Option<LabelNormalizer>,
}

impl Checkpoint {
    pub fn new(model: &HybridModel, genes: Vec<String>, labels: Option<LabelNormalizer>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: *model.config(),
            params: model.params().to_vec(),
            running_stats: model.stats().clone(),
            genes,
            label_normalizer: labels,
        }
    }

    pub fn model(&self) -> Result<HybridModel> {
        HybridModel::from_parts(self.config, self.params.clone(), self.running_stats.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                path: path.into(),
                message: format!(
                    "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                    ckpt.format, ckpt.version
                ),
            });
        }
        if ckpt.genes.len() != ckpt.config.encoder.input_dim {
            return Err(Error::Parse {
                path: path.into(),
                message: "gene list does not match the encoder input size".into(),
            });
        }
        Ok(ckpt)
    }
}
