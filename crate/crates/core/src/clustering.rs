//! Ward-linkage agglomerative clustering of feature columns and the feature
//! permutation derived from a two-way cut of the resulting dendrogram.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("feature vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 features to cluster, got {0}")]
    TooFewFeatures(usize),
    #[error("feature columns need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature {feature} has a non-finite value at sample {sample}")]
    NonFinite { feature: usize, sample: usize },
    #[error("cannot cut {features} features into {k} clusters")]
    BadK { k: usize, features: usize },
    #[error("malformed partition: {0}")]
    Partition(String),
}

/// `p` feature columns of equal length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_samples: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 {
            return Err(ClusterError::TooFewSamples(n));
        }
        for (f, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(ClusterError::LengthMismatch(n, col.len()));
            }
            if let Some(s) = col.iter().position(|v| !v.is_finite()) {
                return Err(ClusterError::NonFinite { feature: f, sample: s });
            }
        }
        Ok(Self { n_samples: n, columns })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    /// Column `q` of the result is column `order[q]` of `self`.
    pub fn select_columns(&self, order: &[usize]) -> Self {
        Self {
            n_samples: self.n_samples,
            columns: order.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// One agglomeration: clusters `a < b` merged at `distance` into a cluster of `size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Merge history. Ids `0..p` are the input features; the `s`-th merge creates id `p + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub steps: Vec<Merge>,
}

impl Dendrogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,id_a,id_b,distance,size\n");
        for (i, m) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{},{}", m.cluster_a, m.cluster_b, m.distance, m.size);
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].distance >= w[0].distance)
    }
}

/// Ward-linkage agglomeration over the feature columns.
///
/// Distances start as Euclidean distances between columns and are updated
/// after each merge of `i` and `j` with
/// `d(s, t) = sqrt(((n_t + n_i) d(t,i)^2 + (n_t + n_j) d(t,j)^2 - n_t d(i,j)^2) / (n_t + n_i + n_j))`.
/// Equal distances are resolved in favour of the lexicographically smallest
/// `(min id, max id)` pair.
pub fn ward_linkage(features: &FeatureMatrix) -> Result<Dendrogram, ClusterError> {
    let p = features.n_features();
    if p < 2 {
        return Err(ClusterError::TooFewFeatures(p));
    }
    let mut dist = vec![0.0; p * p];
    for i in 0..p {
        for j in i + 1..p {
            let d = euclidean_distance(features.column(i), features.column(j))?;
            dist[i * p + j] = d;
            dist[j * p + i] = d;
        }
    }
    // slot -> (cluster id, size) for live clusters
    let mut live: Vec<Option<(usize, usize)>> = (0..p).map(|i| Some((i, 1))).collect();
    let mut steps = Vec::with_capacity(p - 1);

    for step in 0..p - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..p {
            let Some((id_a, _)) = live[a] else { continue };
            for b in a + 1..p {
                let Some((id_b, _)) = live[b] else { continue };
                let d = dist[a * p + b];
                let key = (id_a.min(id_b), id_a.max(id_b));
                let better = match best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < bd || (d == bd && key < bkey),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (d_ij, (id_lo, id_hi), si, sj) = best.expect("at least two live clusters");
        let n_i = live[si].unwrap().1;
        let n_j = live[sj].unwrap().1;
        for t in 0..p {
            if t == si || t == sj {
                continue;
            }
            let Some((_, n_t)) = live[t] else { continue };
            let (n_t, n_i, n_j) = (n_t as f64, n_i as f64, n_j as f64);
            let total = n_t + n_i + n_j;
            let d_ti = dist[t * p + si];
            let d_tj = dist[t * p + sj];
            let d1 = (n_t + n_i) / total * d_ti * d_ti;
            let d2 = (n_t + n_j) / total * d_tj * d_tj;
            let d3 = n_t / total * d_ij * d_ij;
            let d = (d1 + d2 - d3).max(0.0).sqrt();
            dist[t * p + si] = d;
            dist[si * p + t] = d;
        }
        let size = n_i + n_j;
        live[si] = Some((p + step, size));
        live[sj] = None;
        steps.push(Merge {
            cluster_a: id_lo,
            cluster_b: id_hi,
            distance: d_ij,
            size,
        });
    }
    let dendrogram = Dendrogram { n_leaves: p, steps };
    debug_assert!(
        dendrogram
            .steps
            .windows(2)
            .all(|w| w[1].distance >= w[0].distance * (1.0 - 1e-12)),
        "Ward merge distances must be non-decreasing"
    );
    Ok(dendrogram)
}

/// Undoes the last `k - 1` merges; clusters are sorted by their smallest member.
pub fn cut_to_k(dendrogram: &Dendrogram, k: usize) -> Result<Vec<Vec<usize>>, ClusterError> {
    let p = dendrogram.n_leaves;
    if k == 0 || k > p {
        return Err(ClusterError::BadK { k, features: p });
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..p).map(|i| Some(vec![i])).collect();
    for m in &dendrogram.steps[..p - k] {
        let mut merged = members[m.cluster_a].take().expect("cluster merged twice");
        merged.extend(members[m.cluster_b].take().expect("cluster merged twice"));
        members.push(Some(merged));
    }
    let mut clusters: Vec<Vec<usize>> = members
        .into_iter()
        .flatten()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    clusters.sort_by_key(|c| c[0]);
    Ok(clusters)
}

/// A feature permutation whose first `boundary` positions hold one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOrdering {
    pub permutation: Vec<usize>,
    pub boundary: usize,
}

impl FeatureOrdering {
    /// Original order, split at `boundary`.
    pub fn identity(p: usize, boundary: usize) -> Result<Self, ClusterError> {
        let o = Self {
            permutation: (0..p).collect(),
            boundary,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let p = self.permutation.len();
        let mut seen = vec![false; p];
        for &i in &self.permutation {
            if i >= p || std::mem::replace(&mut seen[i], true) {
                return Err(ClusterError::Partition(format!(
                    "permutation {:?} is not a bijection on 0..{p}",
                    self.permutation
                )));
            }
        }
        if self.boundary == 0 || self.boundary >= p {
            return Err(ClusterError::Partition(format!(
                "boundary {} must split {p} features into two non-empty segments",
                self.boundary
            )));
        }
        Ok(())
    }

    /// Reorders the rows of a row-major `[p, width]` block: output row `q`
    /// is input row `permutation[q]`.
    pub fn apply_rows(&self, rows: &[f64], width: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len());
        for &src in &self.permutation {
            out.extend_from_slice(&rows[src * width..(src + 1) * width]);
        }
        out
    }

    /// Inverse of [`apply_rows`](Self::apply_rows).
    pub fn restore_rows(&self, rows: &[f64], width: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows.len()];
        for (q, &src) in self.permutation.iter().enumerate() {
            out[src * width..(src + 1) * width].copy_from_slice(&rows[q * width..(q + 1) * width]);
        }
        out
    }
}

/// Cluster containing feature 0 first, then the other; ascending indices within each.
pub fn reorder_features(clusters: &[Vec<usize>]) -> Result<FeatureOrdering, ClusterError> {
    if clusters.len() != 2 {
        return Err(ClusterError::Partition(format!(
            "expected 2 clusters, got {}",
            clusters.len()
        )));
    }
    let p = clusters[0].len() + clusters[1].len();
    let mut seen = BTreeSet::new();
    for &i in clusters.iter().flatten() {
        if i >= p {
            return Err(ClusterError::Partition(format!("feature {i} outside 0..{p}")));
        }
        if !seen.insert(i) {
            return Err(ClusterError::Partition(format!("feature {i} appears twice")));
        }
    }
    if clusters.iter().any(Vec::is_empty) {
        return Err(ClusterError::Partition("empty cluster".into()));
    }
    let (first, second) = if clusters[0].contains(&0) {
        (&clusters[0], &clusters[1])
    } else {
        (&clusters[1], &clusters[0])
    };
    let mut a = first.clone();
    let mut b = second.clone();
    a.sort_unstable();
    b.sort_unstable();
    let boundary = a.len();
    a.extend(b);
    Ok(FeatureOrdering {
        permutation: a,
        boundary,
    })
}

/// Ward clustering, two-way cut and reordering in one call.
pub fn cluster_and_order(features: &FeatureMatrix) -> Result<(Dendrogram, FeatureOrdering), ClusterError> {
    let dendrogram = ward_linkage(features)?;
    let clusters = cut_to_k(&dendrogram, 2)?;
    let ordering = reorder_features(&clusters)?;
    Ok((dendrogram, ordering))
}
