use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Activation, ModelConfig, ModelError, ShapeLedger};
use crate::clustering::FeatureOrdering;
use crate::numerics::{
    conv2d_backward_with_input, dilated_conv2d, linear, linear_backward, max_pool2d, route_pooled, softmax,
    softmax_cross_entropy, Differentiable, Tensor,
};

pub const PARAM_NAMES: [&str; 8] = [
    "segment1.weight",
    "segment1.bias",
    "segment2.weight",
    "segment2.bias",
    "conv2.weight",
    "conv2.bias",
    "head.weight",
    "head.bias",
];

/// Learnable tensors in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub segment1_weight: Tensor,
    pub segment1_bias: Tensor,
    pub segment2_weight: Tensor,
    pub segment2_bias: Tensor,
    pub conv2_weight: Tensor,
    pub conv2_bias: Tensor,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

impl Params {
    pub fn zeros(config: &ModelConfig, shapes: &ShapeLedger) -> Self {
        let seg = config.segment_conv().kernel_shape();
        let merge = config.merge_conv().kernel_shape();
        Self {
            segment1_weight: Tensor::zeros(&seg),
            segment1_bias: Tensor::zeros(&[config.conv1_channels]),
            segment2_weight: Tensor::zeros(&seg),
            segment2_bias: Tensor::zeros(&[config.conv1_channels]),
            conv2_weight: Tensor::zeros(&merge),
            conv2_bias: Tensor::zeros(&[config.conv2_channels]),
            head_weight: Tensor::zeros(&[config.n_classes, shapes.flat]),
            head_bias: Tensor::zeros(&[config.n_classes]),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.segment1_weight,
            &self.segment1_bias,
            &self.segment2_weight,
            &self.segment2_bias,
            &self.conv2_weight,
            &self.conv2_bias,
            &self.head_weight,
            &self.head_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.segment1_weight,
            &mut self.segment1_bias,
            &mut self.segment2_weight,
            &mut self.segment2_bias,
            &mut self.conv2_weight,
            &mut self.conv2_bias,
            &mut self.head_weight,
            &mut self.head_bias,
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds `other` elementwise.
    pub fn accumulate(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (k, t) in self.tensors().iter().enumerate() {
            if index < t.len() {
                return (k, index);
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn get(&self, index: usize) -> f64 {
        let (k, i) = self.locate(index);
        self.tensors()[k].data()[i]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let (k, i) = self.locate(index);
        self.tensors_mut()[k].data_mut()[i] = value;
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// Every intermediate of one forward pass, as needed by backward and DeepLIFT.
#[derive(Debug, Clone)]
pub struct Trace {
    pub(crate) version: u64,
    /// Segment inputs `[1, h_k, t]`.
    pub segments: [Tensor; 2],
    /// Segment conv outputs before the activation.
    pub segment_pre: [Tensor; 2],
    /// Activated segment maps concatenated along the height axis.
    pub concat: Tensor,
    pub conv2_pre: Tensor,
    pub conv2_post: Tensor,
    pub pooled: Tensor,
    /// Flat `conv2_post` index of each pooled cell's winner.
    pub winners: Vec<usize>,
    pub logits: Tensor,
}

/// Classifier parameters plus the configuration and feature ordering they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct HdlcnnModel {
    config: ModelConfig,
    ordering: FeatureOrdering,
    shapes: ShapeLedger,
    pub(crate) params: Params,
    pub(crate) trained_epochs: u64,
    /// Bumped on every parameter update; traces from older versions are rejected.
    version: u64,
}

fn activate(act: Activation, t: &Tensor) -> Tensor {
    match act {
        Activation::Relu => t.map(|v| v.max(0.0)),
        Activation::Identity => t.clone(),
    }
}

fn activation_grad(act: Activation, grad: &mut Tensor, pre: &Tensor) {
    if act == Activation::Relu {
        for (g, &x) in grad.data_mut().iter_mut().zip(pre.data()) {
            if x <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

/// Stacks `[C, h1, W]` and `[C, h2, W]` into `[C, h1 + h2, W]`.
pub(crate) fn concat_height(a: &Tensor, b: &Tensor) -> Tensor {
    let (c, h1, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let h2 = b.shape()[1];
    let mut out = Vec::with_capacity(c * (h1 + h2) * w);
    for ch in 0..c {
        out.extend_from_slice(&a.data()[ch * h1 * w..(ch + 1) * h1 * w]);
        out.extend_from_slice(&b.data()[ch * h2 * w..(ch + 1) * h2 * w]);
    }
    Tensor::new(vec![c, h1 + h2, w], out).unwrap()
}

/// Inverse of [`concat_height`] with the first part `h1` rows tall.
pub(crate) fn split_height(t: &Tensor, h1: usize) -> [Tensor; 2] {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let h2 = h - h1;
    let mut a = Vec::with_capacity(c * h1 * w);
    let mut b = Vec::with_capacity(c * h2 * w);
    for ch in 0..c {
        let plane = &t.data()[ch * h * w..(ch + 1) * h * w];
        a.extend_from_slice(&plane[..h1 * w]);
        b.extend_from_slice(&plane[h1 * w..]);
    }
    [
        Tensor::new(vec![c, h1, w], a).unwrap(),
        Tensor::new(vec![c, h2, w], b).unwrap(),
    ]
}

fn he_uniform(t: &mut Tensor, fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
}

impl HdlcnnModel {
    /// He-uniform weights, zero biases; deterministic in `config.seed`.
    pub fn build(config: ModelConfig, ordering: FeatureOrdering) -> Result<Self, ModelError> {
        let shapes = config.shapes()?;
        ordering.validate()?;
        if ordering.len() != config.n_features || ordering.boundary != config.boundary {
            return Err(ModelError::Config(format!(
                "ordering (p = {}, boundary = {}) disagrees with config (p = {}, boundary = {})",
                ordering.len(),
                ordering.boundary,
                config.n_features,
                config.boundary
            )));
        }
        let mut params = Params::zeros(&config, &shapes);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (kh, kw) = config.kernel;
        he_uniform(&mut params.segment1_weight, kh * kw, &mut rng);
        he_uniform(&mut params.segment2_weight, kh * kw, &mut rng);
        he_uniform(&mut params.conv2_weight, config.conv1_channels * kh * kw, &mut rng);
        he_uniform(&mut params.head_weight, shapes.flat, &mut rng);
        Ok(Self {
            config,
            ordering,
            shapes,
            params,
            trained_epochs: 0,
            version: 0,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        ordering: FeatureOrdering,
        params: Params,
        trained_epochs: u64,
    ) -> Result<Self, ModelError> {
        let mut m = Self::build(config, ordering)?;
        for (dst, src) in m.params.tensors_mut().into_iter().zip(params.tensors()) {
            src.expect_shape(dst.shape(), "stored parameter")?;
        }
        m.params = params;
        m.trained_epochs = trained_epochs;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ordering(&self) -> &FeatureOrdering {
        &self.ordering
    }

    pub fn shapes(&self) -> &ShapeLedger {
        &self.shapes
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Direct parameter access; counts as an update and invalidates earlier traces.
    pub fn params_mut(&mut self) -> &mut Params {
        self.version += 1;
        &mut self.params
    }

    pub fn trained_epochs(&self) -> u64 {
        self.trained_epochs
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        [1, self.config.n_features, self.config.n_timesteps]
    }

    pub(crate) fn check_sample(&self, x: &Tensor) -> Result<(), ModelError> {
        if x.shape() != self.sample_shape() {
            return Err(ModelError::InputShape {
                expected: self.sample_shape().to_vec(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Full forward pass over one `[1, p, t]` sample, keeping every intermediate.
    pub fn trace(&self, x: &Tensor) -> Result<Trace, ModelError> {
        self.check_sample(x)?;
        let t = self.config.n_timesteps;
        let m = self.config.boundary;
        let act = self.config.activation;
        let split = m * t;
        let segments = [
            Tensor::new(vec![1, m, t], x.data()[..split].to_vec())?,
            Tensor::new(vec![1, self.config.n_features - m, t], x.data()[split..].to_vec())?,
        ];
        let seg_spec = self.config.segment_conv();
        let p = &self.params;
        let segment_pre = [
            dilated_conv2d(&segments[0], &seg_spec, &p.segment1_weight, &p.segment1_bias)?,
            dilated_conv2d(&segments[1], &seg_spec, &p.segment2_weight, &p.segment2_bias)?,
        ];
        let concat = concat_height(&activate(act, &segment_pre[0]), &activate(act, &segment_pre[1]));
        let conv2_pre = dilated_conv2d(&concat, &self.config.merge_conv(), &p.conv2_weight, &p.conv2_bias)?;
        let conv2_post = activate(act, &conv2_pre);
        let (pooled, winners) = max_pool2d(&conv2_post, self.config.pool.0, self.config.pool.1)?;
        let flat = Tensor::vector(pooled.data().to_vec())?;
        let logits = linear(&flat, &p.head_weight, &p.head_bias)?;
        Ok(Trace {
            version: self.version,
            segments,
            segment_pre,
            concat,
            conv2_pre,
            conv2_post,
            pooled,
            winners,
            logits,
        })
    }

    pub fn sample_logits(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.trace(x)?.logits)
    }

    /// Gradients of a scalar loss with respect to every parameter and the
    /// input, given `dL/dlogits` and the trace of the same sample.
    pub fn backward(&self, trace: &Trace, grad_logits: &Tensor) -> Result<(Params, Tensor), ModelError> {
        if trace.version != self.version {
            return Err(ModelError::StaleTrace);
        }
        let act = self.config.activation;
        let p = &self.params;
        let flat = Tensor::vector(trace.pooled.data().to_vec())?;
        let head = linear_backward(grad_logits, &flat, &p.head_weight)?;
        let mut g_conv2 = route_pooled(&head.input, &trace.winners, trace.conv2_post.shape())?;
        activation_grad(act, &mut g_conv2, &trace.conv2_pre);
        let merge = conv2d_backward_with_input(&g_conv2, &trace.concat, &self.config.merge_conv(), &p.conv2_weight)?;
        let [mut g_seg1, mut g_seg2] = split_height(&merge.input, trace.segment_pre[0].shape()[1]);
        activation_grad(act, &mut g_seg1, &trace.segment_pre[0]);
        activation_grad(act, &mut g_seg2, &trace.segment_pre[1]);
        let seg_spec = self.config.segment_conv();
        let s1 = conv2d_backward_with_input(&g_seg1, &trace.segments[0], &seg_spec, &p.segment1_weight)?;
        let s2 = conv2d_backward_with_input(&g_seg2, &trace.segments[1], &seg_spec, &p.segment2_weight)?;
        let mut input = s1.input.into_data();
        input.extend_from_slice(s2.input.data());
        let grads = Params {
            segment1_weight: s1.kernels,
            segment1_bias: s1.bias,
            segment2_weight: s2.kernels,
            segment2_bias: s2.bias,
            conv2_weight: merge.kernels,
            conv2_bias: merge.bias,
            head_weight: head.weights,
            head_bias: head.bias,
        };
        Ok((grads, Tensor::new(self.sample_shape().to_vec(), input)?))
    }

    /// Loss, parameter gradients and correctness for one labeled sample.
    pub(crate) fn sample_gradients(&self, x: &Tensor, label: usize) -> Result<(f64, Params, bool), ModelError> {
        let trace = self.trace(x)?;
        let ce = softmax_cross_entropy(&trace.logits, label)?;
        let (grads, _) = self.backward(&trace, &ce.grad_logits)?;
        Ok((ce.loss, grads, argmax(trace.logits.data()) == label))
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, ModelError> {
        let [_, p, t] = self.sample_shape();
        if batch.ndim() != 4 || batch.shape()[1..] != [1, p, t] {
            return Err(ModelError::InputShape {
                expected: vec![batch.shape().first().copied().unwrap_or(1), 1, p, t],
                actual: batch.shape().to_vec(),
            });
        }
        Ok(batch.shape()[0])
    }

    /// Pre-softmax scores `[N, n_classes]` for a batch `[N, 1, p, t]`.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        let n = self.check_batch(batch)?;
        let per = batch.len() / n;
        let rows = batch
            .data()
            .par_chunks(per)
            .map(|chunk| {
                let x = Tensor::new(self.sample_shape().to_vec(), chunk.to_vec())?;
                self.sample_logits(&x).map(Tensor::into_data)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tensor::new(vec![n, self.config.n_classes], rows.concat())?)
    }

    /// Class probabilities `[N, n_classes]` for a batch `[N, 1, p, t]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        let logits = self.logits(batch)?;
        let k = self.config.n_classes;
        let probs: Vec<f64> = logits.data().chunks(k).flat_map(softmax).collect();
        Ok(Tensor::new(logits.shape().to_vec(), probs)?)
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize, ModelError> {
        Ok(argmax(self.sample_logits(x)?.data()))
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Cross-entropy of one sample against a fixed label, exposed for gradient checking.
#[derive(Debug, Clone)]
pub struct ProbeLoss {
    pub model: HdlcnnModel,
    pub label: usize,
}

impl Differentiable for ProbeLoss {
    fn param_count(&self) -> usize {
        self.model.params.count()
    }

    fn param(&self, index: usize) -> f64 {
        self.model.params.get(index)
    }

    fn set_param(&mut self, index: usize, value: f64) {
        self.model.params.set(index, value);
    }

    fn probe_loss(&self, input: &Tensor) -> f64 {
        let trace = self.model.trace(input).expect("probe input matches model");
        softmax_cross_entropy(&trace.logits, self.label).expect("probe label in range").loss
    }

    fn probe_gradients(&self, input: &Tensor) -> (Vec<f64>, Tensor) {
        let trace = self.model.trace(input).expect("probe input matches model");
        let ce = softmax_cross_entropy(&trace.logits, self.label).expect("probe label in range");
        let (grads, g_in) = self.model.backward(&trace, &ce.grad_logits).expect("fresh trace");
        (grads.flatten(), g_in)
    }
}
