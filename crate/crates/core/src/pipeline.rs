//! End-to-end steps shared by the CLI, the FFI layer and the acceptance
//! suite: order features, fit, evaluate and explain.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{cluster_and_order, ClusterError, Dendrogram, FeatureOrdering};
use crate::data::{DataError, Dataset};
use crate::explainer::{
    global_importance, root_cause, Aggregation, DeepShap, ExplainError, Explanation, GlobalImportance, RootCause,
};
use crate::model::{evaluate, train, Activation, EpochStats, HdlcnnModel, Metrics, ModelConfig, ModelError, TrainConfig};
use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("{0}")]
    Invalid(String),
}

/// Architecture knobs; the data-dependent sizes come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    /// Reorder features by Ward clustering before splitting into segments.
    pub cluster: bool,
    /// Split point used when clustering is off (default: half of p).
    pub boundary: Option<usize>,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: (usize, usize),
    pub dilation: usize,
    pub pool: (usize, usize),
    pub activation: Activation,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let base = ModelConfig::new(2, 1, 2, 1);
        Self {
            cluster: true,
            boundary: None,
            conv1_channels: base.conv1_channels,
            conv2_channels: base.conv2_channels,
            kernel: base.kernel,
            dilation: base.dilation,
            pool: base.pool,
            activation: base.activation,
        }
    }
}

impl ModelSettings {
    pub fn to_config(&self, train: &Dataset, boundary: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            n_features: train.n_features(),
            n_timesteps: train.n_timesteps(),
            n_classes: train.n_classes(),
            boundary,
            conv1_channels: self.conv1_channels,
            conv2_channels: self.conv2_channels,
            kernel: self.kernel,
            dilation: self.dilation,
            pool: self.pool,
            activation: self.activation,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// Normal-class training windows drawn as Deep SHAP references.
    pub background_size: usize,
    pub aggregation: Aggregation,
    /// Class to explain; `None` explains every class except 0.
    pub target_class: Option<usize>,
    pub heatmaps: bool,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            background_size: 100,
            aggregation: Aggregation::MeanAbs,
            target_class: None,
            heatmaps: false,
        }
    }
}

/// Clustering result on the training set: the dendrogram (when clustering
/// ran) and the ordering the model will use.
pub fn order_features(train: &Dataset, settings: &ModelSettings) -> Result<(Option<Dendrogram>, FeatureOrdering), PipelineError> {
    if train.ordering.is_some() {
        return Err(PipelineError::Invalid("expected a dataset in its original feature order".into()));
    }
    if settings.cluster {
        let (dendrogram, ordering) = cluster_and_order(&train.feature_matrix()?)?;
        Ok((Some(dendrogram), ordering))
    } else {
        let p = train.n_features();
        let ordering = FeatureOrdering::identity(p, settings.boundary.unwrap_or(p / 2))?;
        Ok((None, ordering))
    }
}

/// `dataset` permuted into `ordering` (a no-op if it already is).
pub fn apply_ordering(dataset: &Dataset, ordering: &FeatureOrdering) -> Result<Dataset, PipelineError> {
    match &dataset.ordering {
        Some(o) if o == ordering => Ok(dataset.clone()),
        Some(_) => Err(PipelineError::Invalid("dataset carries a different feature ordering".into())),
        None => Ok(dataset.with_ordering(ordering)?),
    }
}

pub struct Fitted {
    pub model: HdlcnnModel,
    pub history: Vec<EpochStats>,
    pub dendrogram: Option<Dendrogram>,
}

/// Builds a model for `ordering` and trains it on the unpermuted `train` set.
pub fn fit_with_ordering(
    train_set: &Dataset,
    ordering: FeatureOrdering,
    settings: &ModelSettings,
    tc: &TrainConfig,
    seed: u64,
) -> Result<(HdlcnnModel, Vec<EpochStats>), PipelineError> {
    let ordered = apply_ordering(train_set, &ordering)?;
    let config = settings.to_config(train_set, ordering.boundary, seed);
    let mut model = HdlcnnModel::build(config, ordering)?;
    let history = train(&mut model, &ordered, tc)?;
    Ok((model, history))
}

/// Order features, build and train.
pub fn fit(train_set: &Dataset, settings: &ModelSettings, tc: &TrainConfig, seed: u64) -> Result<Fitted, PipelineError> {
    let (dendrogram, ordering) = order_features(train_set, settings)?;
    let (model, history) = fit_with_ordering(train_set, ordering, settings, tc, seed)?;
    Ok(Fitted {
        model,
        history,
        dendrogram,
    })
}

/// Metrics of `model` on a dataset in its original feature order.
pub fn evaluate_dataset(model: &HdlcnnModel, dataset: &Dataset) -> Result<Metrics, PipelineError> {
    Ok(evaluate(model, &apply_ordering(dataset, model.ordering())?)?)
}

/// Seeded draw of up to `size` normal-class (label 0) training windows, in
/// dataset order and in the model's feature order.
pub fn background(model: &HdlcnnModel, train_set: &Dataset, size: usize, seed: u64) -> Result<Vec<Tensor>, PipelineError> {
    let ordered = apply_ordering(train_set, model.ordering())?;
    let normal: Vec<&Tensor> = ordered.of_class(0).map(|s| &s.x).collect();
    if normal.is_empty() || size == 0 {
        return Err(PipelineError::Invalid("no normal-class training windows for the background".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample_indices(&mut rng, normal.len(), size.min(normal.len())).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| normal[i].clone()).collect())
}

pub struct ClassReport {
    pub target_class: usize,
    /// Indices into the test set of the explained windows.
    pub sample_ids: Vec<usize>,
    /// One per explained window, rows in the original feature order.
    pub explanations: Vec<Explanation>,
    pub importance: GlobalImportance,
    pub root_cause: RootCause,
}

/// Explains every test window of `target` against a normal-class background
/// and ranks features by aggregated importance.
pub fn explain_class(
    model: &HdlcnnModel,
    train_set: &Dataset,
    test_set: &Dataset,
    target: usize,
    settings: &ExplainSettings,
    seed: u64,
) -> Result<ClassReport, PipelineError> {
    let bg = background(model, train_set, settings.background_size, seed)?;
    let explainer = DeepShap::new(model, &bg)?;
    let ordered = apply_ordering(test_set, model.ordering())?;
    let sample_ids: Vec<usize> = (0..ordered.len()).filter(|&i| ordered.samples[i].label == target).collect();
    if sample_ids.is_empty() {
        return Err(PipelineError::Invalid(format!("test set has no samples of class {target}")));
    }
    let explanations = sample_ids
        .par_iter()
        .map(|&i| {
            explainer
                .explain(i, &ordered.samples[i].x, target)?
                .restore_feature_order(model.ordering())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let importance = global_importance(&explanations, settings.aggregation)?;
    let root_cause = root_cause(&importance);
    Ok(ClassReport {
        target_class: target,
        sample_ids,
        explanations,
        importance,
        root_cause,
    })
}
