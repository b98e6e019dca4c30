use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{HdlcnnModel, ModelError, Params};
use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::Train("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Train(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss and accuracy of one epoch (measured on the fly, before each batch's update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

struct AdamState {
    m: Params,
    v: Params,
    step: i32,
}

/// Checks that `dataset` can be fed to `model` as is.
pub(crate) fn check_dataset(model: &HdlcnnModel, dataset: &Dataset) -> Result<(), ModelError> {
    let cfg = model.config();
    if dataset.n_features() != cfg.n_features || dataset.n_classes() != cfg.n_classes {
        return Err(ModelError::Dataset(format!(
            "dataset has {} features / {} classes, model expects {} / {}",
            dataset.n_features(),
            dataset.n_classes(),
            cfg.n_features,
            cfg.n_classes
        )));
    }
    if !dataset.is_empty() && dataset.n_timesteps() != cfg.n_timesteps {
        return Err(ModelError::Dataset(format!(
            "dataset windows have {} timesteps, model expects {}",
            dataset.n_timesteps(),
            cfg.n_timesteps
        )));
    }
    let identity = model.ordering().permutation.iter().enumerate().all(|(i, &v)| i == v);
    match &dataset.ordering {
        Some(o) if o.permutation != model.ordering().permutation => Err(ModelError::Dataset(
            "dataset was reordered with a different feature ordering than the model's".into(),
        )),
        None if !identity => Err(ModelError::Dataset(
            "dataset must be reordered with the model's feature ordering first".into(),
        )),
        _ => Ok(()),
    }
}

/// Mini-batch minimization of mean cross-entropy. Deterministic given
/// `tc.shuffle_seed` and the model's initial parameters.
pub fn train(model: &mut HdlcnnModel, dataset: &Dataset, tc: &TrainConfig) -> Result<Vec<EpochStats>, ModelError> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::Dataset("training set is empty".into()));
    }
    check_dataset(model, dataset)?;

    let mut rng = ChaCha8Rng::seed_from_u64(tc.shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut adam = AdamState {
        m: Params::zeros(model.config(), model.shapes()),
        v: Params::zeros(model.config(), model.shapes()),
        step: 0,
    };
    let mut history = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let s = &dataset.samples[i];
                    model.sample_gradients(&s.x, s.label)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut grads = Params::zeros(model.config(), model.shapes());
            for (loss, g, ok) in &results {
                loss_sum += loss;
                correct += usize::from(*ok);
                grads.accumulate(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            step(model, &grads, tc, &mut adam);
        }
        let n = dataset.len() as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        };
        if !stats.loss.is_finite() {
            return Err(ModelError::Train(format!("loss diverged at epoch {}", epoch + 1)));
        }
        history.push(stats);
    }
    model.trained_epochs += tc.epochs as u64;
    Ok(history)
}

fn step(model: &mut HdlcnnModel, grads: &Params, tc: &TrainConfig, adam: &mut AdamState) {
    let lr = tc.learning_rate;
    model.bump_version();
    match tc.optimizer {
        Optimizer::Sgd => {
            for (p, g) in model.params.tensors_mut().into_iter().zip(grads.tensors()) {
                p.data_mut().iter_mut().zip(g.data()).for_each(|(w, gv)| *w -= lr * gv);
            }
        }
        Optimizer::Adam { beta1, beta2, epsilon } => {
            adam.step += 1;
            let c1 = 1.0 - beta1.powi(adam.step);
            let c2 = 1.0 - beta2.powi(adam.step);
            let params = model.params.tensors_mut();
            let ms = adam.m.tensors_mut();
            let vs = adam.v.tensors_mut();
            for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
                for (((w, &gv), mv), vv) in p
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *mv = beta1 * *mv + (1.0 - beta1) * gv;
                    *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                    *w -= lr * (*mv / c1) / ((*vv / c2).sqrt() + epsilon);
                }
            }
        }
    }
}
