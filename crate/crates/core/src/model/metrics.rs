use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::check_dataset;
use super::{HdlcnnModel, ModelError};
use crate::data::Dataset;

/// Classification quality. `confusion_matrix[true][predicted]` holds counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_accuracy: f64,
    /// Recall per true class; 0 for classes with no samples.
    pub per_class_accuracy: Vec<f64>,
    pub confusion_matrix: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predictions: &[usize], n_classes: usize) -> Self {
        assert_eq!(labels.len(), predictions.len(), "one prediction per label");
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(predictions) {
            confusion[t][p] += 1;
        }
        let total = labels.len();
        let trace: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[k] as f64 / n as f64
                }
            })
            .collect();
        Self {
            overall_accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            per_class_accuracy: per_class,
            confusion_matrix: confusion,
        }
    }

    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for name in class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.confusion_matrix) {
            out.push_str(name);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Argmax predictions over `dataset`, scored against its labels.
pub fn evaluate(model: &HdlcnnModel, dataset: &Dataset) -> Result<Metrics, ModelError> {
    check_dataset(model, dataset)?;
    let predictions = dataset
        .samples
        .par_iter()
        .map(|s| model.predict(&s.x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Metrics::from_predictions(
        &dataset.labels(),
        &predictions,
        model.config().n_classes,
    ))
}
