//! Model file: `HDL1` frame whose JSON metadata holds the config, the feature
//! ordering and a parameter manifest, followed by the parameters as f64 LE.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HdlcnnModel, ModelConfig, ModelError, Params, PARAM_NAMES};
use crate::clustering::FeatureOrdering;
use crate::framing::{self, Format, FramingError};
use crate::numerics::Tensor;

const MODEL_FORMAT: Format = Format {
    magic: *b"HDL1",
    version: 1,
    kind: "model",
};

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the parameter payload.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    ordering: FeatureOrdering,
    trained_epochs: u64,
    parameters: Vec<ParamEntry>,
}

fn meta_err(detail: impl Into<String>) -> ModelError {
    FramingError::Metadata {
        kind: "model",
        detail: detail.into(),
    }
    .into()
}

impl HdlcnnModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let parameters = PARAM_NAMES
            .iter()
            .zip(self.params.tensors())
            .map(|(name, t)| {
                let e = ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        let meta = Metadata {
            config: self.config().clone(),
            ordering: self.ordering().clone(),
            trained_epochs: self.trained_epochs,
            parameters,
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        framing::encode(MODEL_FORMAT, &json, &self.params.flatten())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let (json, payload) = framing::decode(MODEL_FORMAT, bytes)?;
        let meta: Metadata = serde_json::from_slice(&json).map_err(|e| meta_err(e.to_string()))?;
        let shapes = meta.config.shapes()?;
        let mut params = Params::zeros(&meta.config, &shapes);
        if meta.parameters.len() != PARAM_NAMES.len() {
            return Err(meta_err(format!(
                "expected {} parameter entries, found {}",
                PARAM_NAMES.len(),
                meta.parameters.len()
            )));
        }
        let mut expected_offset = 0u64;
        for ((entry, name), dst) in meta.parameters.iter().zip(PARAM_NAMES).zip(params.tensors_mut()) {
            if entry.name != name || entry.shape != dst.shape() || entry.offset != expected_offset {
                return Err(meta_err(format!(
                    "parameter entry {} {:?} @ {} does not match expected {name} {:?} @ {expected_offset}",
                    entry.name,
                    entry.shape,
                    entry.offset,
                    dst.shape()
                )));
            }
            let start = (entry.offset / 8) as usize;
            let end = start + dst.len();
            let values = payload.get(start..end).ok_or_else(|| {
                ModelError::from(FramingError::Truncated {
                    kind: "model",
                    detail: format!("parameter {name} runs past the payload"),
                })
            })?;
            *dst = Tensor::new(entry.shape.clone(), values.to_vec())?;
            expected_offset += 8 * dst.len() as u64;
        }
        if payload.len() as u64 * 8 != expected_offset {
            return Err(FramingError::Truncated {
                kind: "model",
                detail: format!(
                    "payload holds {} values, manifest describes {}",
                    payload.len(),
                    expected_offset / 8
                ),
            }
            .into());
        }
        HdlcnnModel::from_parts(meta.config, meta.ordering, params, meta.trained_epochs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        framing::write_atomic(path.as_ref(), &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
