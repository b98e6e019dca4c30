use rayon::prelude::*;

use super::{ExplainError, Explanation};
use crate::model::{Activation, HdlcnnModel, ModelError, Trace};
use crate::numerics::{conv2d_backward_input, Tensor};

/// Below this input difference the Rescale rule falls back to the gradient.
pub const RESCALE_THRESHOLD: f64 = 1e-7;

fn check_model(model: &HdlcnnModel, target: usize) -> Result<(), ExplainError> {
    if model.trained_epochs() == 0 {
        return Err(ExplainError::Untrained);
    }
    let n_classes = model.config().n_classes;
    if target >= n_classes {
        return Err(ExplainError::Target { target, n_classes });
    }
    Ok(())
}

/// Rescale rule: `m <- m * (dy / dz)` per unit, or the local gradient when `|dz|` is tiny.
fn rescale(act: Activation, m: &mut Tensor, pre_x: &Tensor, pre_r: &Tensor) {
    if act == Activation::Identity {
        return;
    }
    let pairs = pre_x.data().iter().zip(pre_r.data());
    for (mv, (&zx, &zr)) in m.data_mut().iter_mut().zip(pairs) {
        let dz = zx - zr;
        *mv *= if dz.abs() >= RESCALE_THRESHOLD {
            (zx.max(0.0) - zr.max(0.0)) / dz
        } else if zx > 0.0 {
            1.0
        } else {
            0.0
        };
    }
}

/// Max-pool rule. With `a` and `b` the input differences at the sample's and
/// the reference's window winners, `b <= d(out) <= a`, so `d(out)` is split as
/// `lambda * a + (1 - lambda) * b` and each winner gets a multiplier in `[0, 1]`.
fn unpool(m_pooled: &[f64], tx: &Trace, tr: &Trace) -> Tensor {
    let (xin, rin) = (tx.conv2_post.data(), tr.conv2_post.data());
    let mut out = Tensor::zeros(tx.conv2_post.shape());
    let dst = out.data_mut();
    let winners = tx.winners.iter().zip(&tr.winners);
    for (o, (&mv, (&wx, &wr))) in m_pooled.iter().zip(winners).enumerate() {
        let a = xin[wx] - rin[wx];
        let b = xin[wr] - rin[wr];
        if wx == wr || a == b {
            dst[wx] += mv;
            continue;
        }
        let d_out = tx.pooled.data()[o] - tr.pooled.data()[o];
        let lambda = ((d_out - b) / (a - b)).clamp(0.0, 1.0);
        dst[wx] += mv * lambda;
        dst[wr] += mv * (1.0 - lambda);
    }
    out
}

/// DeepLIFT multipliers of the target logit with respect to the `[1, p, t]` input.
fn multipliers(model: &HdlcnnModel, tx: &Trace, tr: &Trace, target: usize) -> Result<Tensor, ModelError> {
    let cfg = model.config();
    let params = model.params();
    let flat = model.shapes().flat;
    let head_row = &params.head_weight.data()[target * flat..(target + 1) * flat];

    let mut m_conv2 = unpool(head_row, tx, tr);
    rescale(cfg.activation, &mut m_conv2, &tx.conv2_pre, &tr.conv2_pre);
    let concat_hw = (tx.concat.shape()[1], tx.concat.shape()[2]);
    let m_concat = conv2d_backward_input(&m_conv2, &cfg.merge_conv(), &params.conv2_weight, concat_hw)?;

    let h1 = tx.segment_pre[0].shape()[1];
    let [mut m1, mut m2] = crate::model::split_height(&m_concat, h1);
    rescale(cfg.activation, &mut m1, &tx.segment_pre[0], &tr.segment_pre[0]);
    rescale(cfg.activation, &mut m2, &tx.segment_pre[1], &tr.segment_pre[1]);
    let spec = cfg.segment_conv();
    let t = cfg.n_timesteps;
    let in1 = conv2d_backward_input(&m1, &spec, &params.segment1_weight, (cfg.boundary, t))?;
    let in2 = conv2d_backward_input(&m2, &spec, &params.segment2_weight, (cfg.n_features - cfg.boundary, t))?;
    let mut data = in1.into_data();
    data.extend_from_slice(in2.data());
    Ok(Tensor::new(model.sample_shape().to_vec(), data)?)
}

fn contributions(model: &HdlcnnModel, x: &Tensor, tx: &Trace, r: &Tensor, tr: &Trace, target: usize) -> Result<Tensor, ModelError> {
    let m = multipliers(model, tx, tr, target)?;
    let [_, p, t] = model.sample_shape();
    let c = m.data().iter().zip(x.data().iter().zip(r.data())).map(|(mv, (a, b))| mv * (a - b)).collect();
    Ok(Tensor::new(vec![p, t], c)?)
}

/// Contributions of each input cell to the target logit relative to `reference`.
pub fn deeplift_attribute(
    model: &HdlcnnModel,
    sample: &Tensor,
    reference: &Tensor,
    target: usize,
) -> Result<Explanation, ExplainError> {
    check_model(model, target)?;
    let tx = model.trace(sample)?;
    let tr = model.trace(reference)?;
    let c = contributions(model, sample, &tx, reference, &tr, target)?;
    Explanation::new(0, target, c, tr.logits.data()[target], tx.logits.data()[target])
}

/// Deep SHAP with a fixed background whose forward passes are computed once.
pub struct DeepShap<'a> {
    model: &'a HdlcnnModel,
    background: Vec<(Tensor, Trace)>,
}

impl<'a> DeepShap<'a> {
    pub fn new(model: &'a HdlcnnModel, background: &[Tensor]) -> Result<Self, ExplainError> {
        if background.is_empty() {
            return Err(ExplainError::EmptyBackground);
        }
        if model.trained_epochs() == 0 {
            return Err(ExplainError::Untrained);
        }
        let background = background
            .par_iter()
            .map(|r| Ok((r.clone(), model.trace(r)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Self { model, background })
    }

    pub fn background_len(&self) -> usize {
        self.background.len()
    }

    /// DeepLIFT averaged over every background reference.
    pub fn explain(&self, sample_id: usize, sample: &Tensor, target: usize) -> Result<Explanation, ExplainError> {
        check_model(self.model, target)?;
        let tx = self.model.trace(sample)?;
        let [_, p, t] = self.model.sample_shape();
        let mut total = Tensor::zeros(&[p, t]);
        let mut reference_output = 0.0;
        for (r, tr) in &self.background {
            let c = contributions(self.model, sample, &tx, r, tr, target)?;
            total.data_mut().iter_mut().zip(c.data()).for_each(|(a, b)| *a += b);
            reference_output += tr.logits.data()[target];
        }
        let n = self.background.len() as f64;
        total.data_mut().iter_mut().for_each(|v| *v /= n);
        Explanation::new(sample_id, target, total, reference_output / n, tx.logits.data()[target])
    }
}

pub fn deep_shap(
    model: &HdlcnnModel,
    sample: &Tensor,
    background: &[Tensor],
    target: usize,
) -> Result<Explanation, ExplainError> {
    DeepShap::new(model, background)?.explain(0, sample, target)
}
