//! Block-correlated AR(1) process generator with planted faults.
//!
//! Each feature follows `x_t = a_f x_{t-1} + e_t`, where the innovations of
//! features in one block share pairwise correlation `rho` (unit variance,
//! Cholesky-factored). A fault class adds a disturbance to its root feature
//! from the onset on and leaks an attenuated copy into the root's block-mates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{apply_normalizer, fit_normalizer, window, DataError, Dataset, SeriesTable};

const BURN_IN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub features: Vec<usize>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub name: String,
    pub root: usize,
    /// Fraction of each run simulated before the disturbance starts.
    pub onset_fraction: f64,
    /// Step change of the root's mean, in units of its stationary std.
    pub mean_shift: f64,
    /// Factor applied to the root's stationary variance (1 = unchanged).
    pub variance_multiplier: f64,
    /// Fraction of the disturbance copied into the root's block-mates.
    pub propagation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_features: usize,
    pub blocks: Vec<Block>,
    /// One AR(1) coefficient per feature.
    pub ar_coefficients: Vec<f64>,
    /// Class 0 is normal operation; class `k + 1` is `faults[k]`.
    pub faults: Vec<FaultSpec>,
    pub window: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = 14;
        Self {
            n_features: p,
            blocks: vec![
                Block {
                    features: (0..7).collect(),
                    rho: 0.9,
                },
                Block {
                    features: (7..14).collect(),
                    rho: 0.9,
                },
            ],
            ar_coefficients: vec![0.5; p],
            faults: vec![
                FaultSpec {
                    name: "mean_shift".into(),
                    root: 2,
                    onset_fraction: 0.2,
                    mean_shift: 3.0,
                    variance_multiplier: 1.0,
                    propagation: 0.1,
                },
                FaultSpec {
                    name: "variance".into(),
                    root: 11,
                    onset_fraction: 0.2,
                    mean_shift: 0.0,
                    variance_multiplier: 25.0,
                    propagation: 0.1,
                },
            ],
            window: 20,
            train_windows: 600,
            test_windows: 300,
            seed: 0,
        }
    }
}

/// Planted root cause of each class (`None` for normal operation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub classes: Vec<ClassTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTruth {
    pub label: usize,
    pub name: String,
    pub root_feature: Option<usize>,
}

impl GroundTruth {
    pub fn root_of(&self, label: usize) -> Option<usize> {
        self.classes.iter().find(|c| c.label == label).and_then(|c| c.root_feature)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    pub ground_truth: GroundTruth,
}

impl SynthConfig {
    pub fn n_classes(&self) -> usize {
        self.faults.len() + 1
    }

    pub fn class_names(&self) -> Vec<String> {
        std::iter::once("normal".to_string())
            .chain(self.faults.iter().map(|f| f.name.clone()))
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.n_features).map(|i| format!("X{i}")).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let p = self.n_features;
        let err = |m: String| Err(DataError::Config(m));
        if p < 2 {
            return err(format!("n_features must be >= 2, got {p}"));
        }
        let mut owner: Vec<Option<usize>> = vec![None; p];
        for (b, block) in self.blocks.iter().enumerate() {
            if !(block.rho.abs() < 1.0) {
                return err(format!("blocks[{b}].rho = {} must satisfy |rho| < 1", block.rho));
            }
            for &f in &block.features {
                if f >= p {
                    return err(format!("blocks[{b}] feature index {f} >= n_features {p}"));
                }
                if let Some(prev) = owner[f] {
                    return err(format!("blocks[{b}] feature index {f} overlaps blocks[{prev}]"));
                }
                owner[f] = Some(b);
            }
        }
        if let Some(f) = owner.iter().position(Option::is_none) {
            return err(format!("feature index {f} is not covered by any block"));
        }
        if self.ar_coefficients.len() != p {
            return err(format!(
                "ar_coefficients has {} entries, expected {p}",
                self.ar_coefficients.len()
            ));
        }
        if let Some(i) = self.ar_coefficients.iter().position(|a| !(a.abs() < 1.0)) {
            return err(format!("ar_coefficients[{i}] must satisfy |a| < 1"));
        }
        for (k, f) in self.faults.iter().enumerate() {
            if f.root >= p {
                return err(format!("faults[{k}].root {} >= n_features {p}", f.root));
            }
            if !(0.0..1.0).contains(&f.onset_fraction) {
                return err(format!("faults[{k}].onset_fraction must lie in [0, 1)"));
            }
            if !(f.variance_multiplier >= 1.0) || !f.mean_shift.is_finite() || !f.propagation.is_finite() {
                return err(format!(
                    "faults[{k}]: variance_multiplier must be >= 1 and mean_shift/propagation finite"
                ));
            }
        }
        if self.window == 0 {
            return err("window must be >= 1".into());
        }
        let n = self.n_classes();
        if self.train_windows < n || self.test_windows < n {
            return err(format!("need at least one train and test window per class ({n} classes)"));
        }
        Ok(())
    }

    fn windows_for(&self, total: usize, class: usize) -> usize {
        let n = self.n_classes();
        total / n + usize::from(class < total % n)
    }
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

struct Process<'a> {
    cfg: &'a SynthConfig,
    factors: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    block_of: Vec<usize>,
}

impl<'a> Process<'a> {
    fn new(cfg: &'a SynthConfig) -> Result<Self, DataError> {
        let mut factors = Vec::new();
        let mut block_of = vec![0; cfg.n_features];
        for (b, block) in cfg.blocks.iter().enumerate() {
            let n = block.features.len();
            let cov: Vec<f64> = (0..n * n)
                .map(|k| if k / n == k % n { 1.0 } else { block.rho })
                .collect();
            let l = cholesky(&cov, n).ok_or_else(|| {
                DataError::Config(format!(
                    "blocks[{b}] covariance with rho = {} is not positive definite",
                    block.rho
                ))
            })?;
            factors.push(l);
            for &f in &block.features {
                block_of[f] = b;
            }
        }
        let sigma = cfg.ar_coefficients.iter().map(|a| 1.0 / (1.0 - a * a).sqrt()).collect();
        Ok(Self {
            cfg,
            factors,
            sigma,
            block_of,
        })
    }

    /// Simulates one run and keeps the `rows` rows after the fault onset.
    fn run(&self, class: usize, rows: usize, rng: &mut ChaCha8Rng) -> SeriesTable {
        let p = self.cfg.n_features;
        let fault = class.checked_sub(1).map(|k| &self.cfg.faults[k]);
        let lead = fault.map_or(0, |f| {
            (rows as f64 * f.onset_fraction / (1.0 - f.onset_fraction)).ceil() as usize
        });
        let mut x = vec![0.0; p];
        let mut z = vec![0.0; p];
        let mut values = Vec::with_capacity(rows * p);
        for step in 0..BURN_IN + lead + rows {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for (block, l) in self.cfg.blocks.iter().zip(&self.factors) {
                let n = block.features.len();
                for (i, &fi) in block.features.iter().enumerate() {
                    let e: f64 = (0..=i).map(|k| l[i * n + k] * z[block.features[k]]).sum();
                    x[fi] = self.cfg.ar_coefficients[fi] * x[fi] + e;
                }
            }
            let noise: f64 = if fault.is_some() { rng.sample(StandardNormal) } else { 0.0 };
            if step < BURN_IN + lead {
                continue;
            }
            let mut y = x.clone();
            if let Some(f) = fault {
                // disturbance in units of the receiving feature's stationary std
                let d = f.mean_shift + (f.variance_multiplier - 1.0).sqrt() * noise;
                for &m in &self.cfg.blocks[self.block_of[f.root]].features {
                    let gain = if m == f.root { 1.0 } else { f.propagation };
                    y[m] += gain * d * self.sigma[m];
                }
            }
            values.extend_from_slice(&y);
        }
        SeriesTable::from_flat(self.cfg.feature_names(), rows, values)
    }
}

/// Simulates train and test runs for every class, fits min-max normalization on
/// the training rows, and windows each run without overlap.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput, DataError> {
    cfg.validate()?;
    let process = Process::new(cfg)?;
    let n_classes = cfg.n_classes();
    let mut runs: [Vec<SeriesTable>; 2] = [Vec::new(), Vec::new()];
    for (split, total) in [cfg.train_windows, cfg.test_windows].into_iter().enumerate() {
        for class in 0..n_classes {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((split * n_classes + class) as u64);
            let rows = cfg.windows_for(total, class) * cfg.window;
            runs[split].push(process.run(class, rows, &mut rng));
        }
    }
    let train_refs: Vec<&SeriesTable> = runs[0].iter().collect();
    let stats = fit_normalizer(&SeriesTable::concat(&train_refs)?);
    let mut datasets = Vec::with_capacity(2);
    for tables in &runs {
        let mut samples = Vec::new();
        for (class, table) in tables.iter().enumerate() {
            let normed = apply_normalizer(table, &stats)?;
            samples.extend(window(&normed, cfg.window, cfg.window, class)?);
        }
        datasets.push(Dataset::new(
            samples,
            cfg.class_names(),
            cfg.feature_names(),
            stats.clone(),
        )?);
    }
    let test = datasets.pop().unwrap();
    let train = datasets.pop().unwrap();
    let ground_truth = GroundTruth {
        classes: cfg
            .class_names()
            .into_iter()
            .enumerate()
            .map(|(label, name)| ClassTruth {
                label,
                name,
                root_feature: label.checked_sub(1).map(|k| cfg.faults[k].root),
            })
            .collect(),
    };
    Ok(SynthOutput {
        train,
        test,
        ground_truth,
    })
}
