use serde::{Deserialize, Serialize};

use super::{DataError, SeriesTable};

/// Per-feature min/max of the fit set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// `max == min`; such features normalize to 0.
    pub degenerate: Vec<bool>,
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn normalize(&self, feature: usize, x: f64) -> f64 {
        if self.degenerate[feature] {
            0.0
        } else {
            (x - self.min[feature]) / (self.max[feature] - self.min[feature])
        }
    }

    pub fn denormalize(&self, feature: usize, x: f64) -> f64 {
        x * (self.max[feature] - self.min[feature]) + self.min[feature]
    }
}

pub fn fit_normalizer(table: &SeriesTable) -> NormStats {
    let p = table.n_cols();
    let mut min = vec![f64::INFINITY; p];
    let mut max = vec![f64::NEG_INFINITY; p];
    for r in 0..table.n_rows() {
        for (c, &v) in table.row(r).iter().enumerate() {
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    let degenerate = min.iter().zip(&max).map(|(a, b)| a == b).collect();
    NormStats { min, max, degenerate }
}

/// `(x - min) / (max - min)` per feature, without clamping.
pub fn apply_normalizer(table: &SeriesTable, stats: &NormStats) -> Result<SeriesTable, DataError> {
    if stats.n_features() != table.n_cols() {
        return Err(DataError::Table(format!(
            "normalizer fitted on {} features, table has {}",
            stats.n_features(),
            table.n_cols()
        )));
    }
    let p = table.n_cols();
    let values = table
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| stats.normalize(i % p, v))
        .collect();
    let mut out = SeriesTable::from_flat(table.names.clone(), table.n_rows(), values);
    out.metadata = table.metadata.clone();
    Ok(out)
}
