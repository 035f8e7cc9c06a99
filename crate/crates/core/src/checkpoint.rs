//! Self-describing checkpoint files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biae::{parameter_count, BiaeParams};
use crate::encoder::ToyEncoder;
use crate::error::{Error, Result};
use crate::segmenter::SegmenterDescriptor;
use crate::train::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "biae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub segmenter: SegmenterDescriptor,
    pub oracle: String,
    /// How the hypothesis marker is represented by the encoder.
    pub hypothesis_marker: String,
    pub initialization: String,
    pub steps: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub encoder: ToyEncoder,
    pub parameters: BTreeMap<String, NamedArray>,
    pub metadata: CheckpointMetadata,
}

/// SHA-256 over the config's JSON form, hex encoded.
pub fn config_hash(config: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn shape_of(name: &str, d: usize) -> Vec<usize> {
    match name {
        "w_align" | "w_attn" => vec![2 * d],
        "w_entail" => vec![3, 4 * d],
        "b_entail" => vec![3],
        "e_entail" | "e_contradict" | "e_neutral" => vec![d],
        "w_decision" => vec![4, 3 * d],
        "b_decision" => vec![4],
        _ => vec![],
    }
}

impl Checkpoint {
    pub fn new(params: &BiaeParams, encoder: &ToyEncoder, config: &TrainConfig, metadata: CheckpointMetadata) -> Self {
        let d = params.dim();
        let parameters = params
            .groups()
            .into_iter()
            .map(|(name, data)| {
                (
                    name.to_string(),
                    NamedArray {
                        shape: shape_of(name, d),
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dim: d,
            seed: config.seed,
            config_hash: config_hash(config),
            config: config.clone(),
            encoder: encoder.clone(),
            parameters,
            metadata,
        }
    }

    /// Rebuilds BiAE parameters, checking names, shapes and finiteness.
    pub fn params(&self) -> Result<BiaeParams> {
        let bad = |msg: String| Error::validation(format!("checkpoint: {msg}"));
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format {} v{}", self.format, self.version)));
        }
        if self.encoder.dim != self.dim || self.encoder.scale.len() != self.dim || self.encoder.shift.len() != self.dim {
            return Err(bad("encoder dimension disagrees with d".into()));
        }
        let mut params = BiaeParams::zeros(self.dim);
        let mut seen = 0;
        for (name, slot) in params.groups_mut() {
            let array = self.parameters.get(name).ok_or_else(|| bad(format!("missing `{name}`")))?;
            let expected = shape_of(name, self.dim);
            if array.shape != expected || array.data.len() != slot.len() {
                return Err(bad(format!("`{name}` has shape {:?}, expected {expected:?}", array.shape)));
            }
            slot.copy_from_slice(&array.data);
            seen += 1;
        }
        if seen != self.parameters.len() {
            return Err(bad("unknown parameter arrays present".into()));
        }
        if !params.is_finite() || self.encoder.scale.iter().chain(&self.encoder.shift).any(|x| !x.is_finite()) {
            return Err(bad("non-finite values".into()));
        }
        debug_assert_eq!(params.scalar_count(), parameter_count(self.dim));
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        ckpt.params()?;
        Ok(ckpt)
    }
}
