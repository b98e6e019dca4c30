//! Feature attribution for the classifier: Shapley oracles, DeepLIFT,
//! Deep SHAP, per-feature importance and root-cause selection.

mod deeplift;
mod heatmap;
mod importance;
mod shapley;

pub use deeplift::{deep_shap, deeplift_attribute, DeepShap, RESCALE_THRESHOLD};
pub use heatmap::contributions_svg;
pub use importance::{global_importance, root_cause, Aggregation, GlobalImportance, RootCause};
pub use shapley::{exact_shapley, linear_shap, MAX_PLAYERS};

use thiserror::Error;

use crate::clustering::FeatureOrdering;
use crate::model::ModelError;
use crate::numerics::Tensor;

/// Allowed gap between the contribution total and the output difference.
pub const SUMMATION_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("{players} players exceed the exact enumeration limit of {max}")]
    TooManyPlayers { players: usize, max: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("no explanations to aggregate")]
    NoExplanations,
    #[error("explanations target different classes ({0} and {1})")]
    MixedTargets(usize, usize),
    #[error("model has not been trained")]
    Untrained,
    #[error("target class {target} out of range for {n_classes} classes")]
    Target { target: usize, n_classes: usize },
    #[error("contributions sum to {sum} but the output moved by {delta}")]
    Summation { sum: f64, delta: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Contributions of every feature x time cell to one output, relative to a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub sample_id: usize,
    pub target_class: usize,
    /// `[p, t]`
    pub contributions: Tensor,
    pub reference_output: f64,
    pub sample_output: f64,
}

impl Explanation {
    /// Fails unless the contributions add up to `sample_output - reference_output`.
    pub fn new(
        sample_id: usize,
        target_class: usize,
        contributions: Tensor,
        reference_output: f64,
        sample_output: f64,
    ) -> Result<Self, ExplainError> {
        if contributions.ndim() != 2 {
            return Err(ExplainError::Length(format!(
                "contributions must be [p, t], got {:?}",
                contributions.shape()
            )));
        }
        let sum = contributions.sum();
        let delta = sample_output - reference_output;
        if !((sum - delta).abs() <= SUMMATION_TOLERANCE) {
            return Err(ExplainError::Summation { sum, delta });
        }
        Ok(Self {
            sample_id,
            target_class,
            contributions,
            reference_output,
            sample_output,
        })
    }

    pub fn n_features(&self) -> usize {
        self.contributions.shape()[0]
    }

    /// Row sums: one value per feature.
    pub fn feature_sums(&self) -> Vec<f64> {
        let t = self.contributions.shape()[1];
        self.contributions.data().chunks(t).map(|row| row.iter().sum()).collect()
    }

    /// Same explanation with rows moved back to the unpermuted feature order.
    pub fn restore_feature_order(&self, ordering: &FeatureOrdering) -> Result<Self, ExplainError> {
        let [p, t] = [self.contributions.shape()[0], self.contributions.shape()[1]];
        if ordering.len() != p {
            return Err(ExplainError::Length(format!("ordering of {} for {p} features", ordering.len())));
        }
        let rows = ordering.restore_rows(self.contributions.data(), t);
        Ok(Self {
            contributions: Tensor::new(vec![p, t], rows).map_err(ModelError::from)?,
            ..self.clone()
        })
    }
}
