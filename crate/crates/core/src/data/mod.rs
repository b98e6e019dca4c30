//! Time-series ingestion, min-max normalization, windowing, the synthetic
//! process generator, and the on-disk dataset cache.

mod normalize;
mod synth;
mod table;
mod window;

pub use normalize::{apply_normalizer, fit_normalizer, NormStats};
pub use synth::{synth_generate, Block, FaultSpec, GroundTruth, SynthConfig, SynthOutput};
pub use table::{load_csv, SeriesTable};
pub use window::window;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{FeatureMatrix, FeatureOrdering};
use crate::framing::{self, FramingError, Format};
use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("empty file: {0}")]
    Empty(String),
    #[error("no data rows in {0}")]
    NoRows(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: cannot parse {value:?} as a finite number")]
    Parse { row: usize, col: usize, value: String },
    #[error("table error: {0}")]
    Table(String),
    #[error("windowing error: {0}")]
    Window(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("synthetic config error: {0}")]
    Config(String),
    #[error(transparent)]
    Framing(#[from] FramingError),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// One window `[1, p, t]` and its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub label: usize,
}

/// Labeled windows sharing one shape, plus the normalization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub norm_stats: NormStats,
    /// Set once the feature axis has been permuted for a model.
    pub ordering: Option<FeatureOrdering>,
}

const DATASET_FORMAT: Format = Format {
    magic: *b"HDS1",
    version: 1,
    kind: "dataset",
};

#[derive(Serialize, Deserialize)]
struct Manifest {
    shape: Vec<usize>,
    n_samples: usize,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    labels: Vec<usize>,
    norm_stats: NormStats,
    ordering: Option<FeatureOrdering>,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        norm_stats: NormStats,
    ) -> Result<Self, DataError> {
        let ds = Self {
            samples,
            class_names,
            feature_names,
            norm_stats,
            ordering: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), DataError> {
        let p = self.feature_names.len();
        if self.norm_stats.n_features() != p {
            return Err(DataError::Dataset(format!(
                "{} feature names but normalizer covers {}",
                p,
                self.norm_stats.n_features()
            )));
        }
        let Some(first) = self.samples.first() else {
            return Ok(());
        };
        let shape = first.x.shape().to_vec();
        if shape.len() != 3 || shape[0] != 1 || shape[1] != p {
            return Err(DataError::Dataset(format!(
                "samples must be [1, {p}, t], got {shape:?}"
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.x.shape() != shape.as_slice() {
                return Err(DataError::Dataset(format!(
                    "sample {i} has shape {:?}, expected {shape:?}",
                    s.x.shape()
                )));
            }
            if s.label >= self.class_names.len() {
                return Err(DataError::Dataset(format!(
                    "sample {i} label {} >= {} classes",
                    s.label,
                    self.class_names.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_timesteps(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.shape()[2])
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn of_class(&self, label: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.label == label)
    }

    /// Presents the features in a new order: feature `q` of the result is
    /// feature `order[q]` of `self`. Names and normalization follow the data.
    pub fn select_features(&self, order: &[usize]) -> Result<Self, DataError> {
        let p = self.n_features();
        let mut seen = vec![false; p];
        if order.len() != p || order.iter().any(|&i| i >= p || std::mem::replace(&mut seen[i], true)) {
            return Err(DataError::Dataset(format!("{order:?} is not a permutation of 0..{p}")));
        }
        let ordering = FeatureOrdering {
            permutation: order.to_vec(),
            boundary: 0,
        };
        let t = self.n_timesteps();
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                x: Tensor::new(s.x.shape().to_vec(), ordering.apply_rows(s.x.data(), t)).unwrap(),
                label: s.label,
            })
            .collect();
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            samples,
            class_names: self.class_names.clone(),
            feature_names: order.iter().map(|&i| self.feature_names[i].clone()).collect(),
            norm_stats: NormStats {
                min: pick(&self.norm_stats.min),
                max: pick(&self.norm_stats.max),
                degenerate: order.iter().map(|&i| self.norm_stats.degenerate[i]).collect(),
            },
            ordering: None,
        })
    }

    /// Permutes the feature axis for a model and records the ordering.
    pub fn with_ordering(&self, ordering: &FeatureOrdering) -> Result<Self, DataError> {
        if self.ordering.is_some() {
            return Err(DataError::Dataset("dataset is already reordered".into()));
        }
        if ordering.len() != self.n_features() {
            return Err(DataError::Dataset(format!(
                "ordering covers {} features, dataset has {}",
                ordering.len(),
                self.n_features()
            )));
        }
        let mut out = self.select_features(&ordering.permutation)?;
        out.ordering = Some(ordering.clone());
        Ok(out)
    }

    /// One column per feature: every sample's timesteps laid end to end.
    pub fn feature_matrix(&self) -> Result<FeatureMatrix, DataError> {
        let t = self.n_timesteps();
        let columns = (0..self.n_features())
            .map(|f| {
                self.samples
                    .iter()
                    .flat_map(|s| s.x.data()[f * t..(f + 1) * t].iter().copied())
                    .collect()
            })
            .collect();
        FeatureMatrix::new(columns).map_err(|e| DataError::Dataset(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            shape: self.samples.first().map_or(vec![1, self.n_features(), 0], |s| s.x.shape().to_vec()),
            n_samples: self.len(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            labels: self.labels(),
            norm_stats: self.norm_stats.clone(),
            ordering: self.ordering.clone(),
        };
        let meta = serde_json::to_vec(&manifest).expect("manifest serializes");
        let payload: Vec<f64> = self.samples.iter().flat_map(|s| s.x.data().iter().copied()).collect();
        framing::encode(DATASET_FORMAT, &meta, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let (meta, payload) = framing::decode(DATASET_FORMAT, bytes)?;
        let m: Manifest = serde_json::from_slice(&meta).map_err(|e| FramingError::Metadata {
            kind: "dataset",
            detail: e.to_string(),
        })?;
        let per: usize = m.shape.iter().product();
        if m.labels.len() != m.n_samples || payload.len() != per * m.n_samples {
            return Err(FramingError::Truncated {
                kind: "dataset",
                detail: format!(
                    "manifest describes {} samples of {per} values, payload holds {}",
                    m.n_samples,
                    payload.len()
                ),
            }
            .into());
        }
        let samples = if per == 0 {
            Vec::new()
        } else {
            payload
                .chunks_exact(per)
                .zip(&m.labels)
                .map(|(chunk, &label)| {
                    Ok(Sample {
                        x: Tensor::new(m.shape.clone(), chunk.to_vec())
                            .map_err(|e| DataError::Dataset(e.to_string()))?,
                        label,
                    })
                })
                .collect::<Result<Vec<_>, DataError>>()?
        };
        let ds = Self {
            samples,
            class_names: m.class_names,
            feature_names: m.feature_names,
            norm_stats: m.norm_stats,
            ordering: m.ordering,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        framing::write_atomic(path.as_ref(), &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
