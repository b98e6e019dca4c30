use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{ExplainError, Explanation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Plain average of the per-sample feature contributions.
    SignedMean,
    /// Average of their absolute values.
    MeanAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub phi: Vec<f64>,
    pub n_samples_used: usize,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCause {
    pub feature: usize,
    /// Features by decreasing importance (ties: lower index first).
    pub ranking: Vec<usize>,
}

/// Per-feature importance: each explanation's contribution rows are summed
/// over time, then averaged over explanations (optionally after `|.|`).
pub fn global_importance(explanations: &[Explanation], aggregation: Aggregation) -> Result<GlobalImportance, ExplainError> {
    let first = explanations.first().ok_or(ExplainError::NoExplanations)?;
    let p = first.contributions.shape()[0];
    let mut phi = vec![0.0; p];
    for e in explanations {
        if e.target_class != first.target_class {
            return Err(ExplainError::MixedTargets(first.target_class, e.target_class));
        }
        if e.contributions.shape() != first.contributions.shape() {
            return Err(ExplainError::Length(format!(
                "contribution shapes {:?} and {:?}",
                first.contributions.shape(),
                e.contributions.shape()
            )));
        }
        for (acc, value) in phi.iter_mut().zip(e.feature_sums()) {
            *acc += match aggregation {
                Aggregation::SignedMean => value,
                Aggregation::MeanAbs => value.abs(),
            };
        }
    }
    let n = explanations.len();
    phi.iter_mut().for_each(|v| *v /= n as f64);
    Ok(GlobalImportance {
        phi,
        n_samples_used: n,
        aggregation,
    })
}

/// The most important feature and the full ranking.
pub fn root_cause(gi: &GlobalImportance) -> RootCause {
    let mut ranking: Vec<usize> = (0..gi.phi.len()).collect();
    ranking.sort_by(|&a, &b| gi.phi[b].total_cmp(&gi.phi[a]).then(a.cmp(&b)));
    RootCause {
        feature: ranking.first().copied().unwrap_or(0),
        ranking,
    }
}
