//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use hdlcnn_core::clustering::{FeatureMatrix, FeatureOrdering};
use hdlcnn_core::data::{fit_normalizer, Dataset, Sample, SeriesTable};
use hdlcnn_core::model::{train, Activation, HdlcnnModel, ModelConfig, TrainConfig};
use hdlcnn_core::numerics::{
    conv2d_backward_with_input, dilated_conv2d, linear, linear_backward, ConvSpec, Differentiable, StackLayer, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Undilated stride-1 convolution written straight from the sum definition.
pub fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor) -> Tensor {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let xi = |c: usize, i: usize, j: usize| x.data()[(c * h + i) * w + j];
    let ki = |o: usize, c: usize, m: usize, n: usize| k.data()[((o * c_in + c) * kh + m) * kw + n];
    Tensor::from_fn(&[c_out, oh, ow], |idx| {
        let (o, i, j) = (idx / (oh * ow), (idx / ow) % oh, idx % ow);
        let mut acc = b.data()[o];
        for c in 0..c_in {
            for m in 0..kh {
                for n in 0..kw {
                    acc += ki(o, c, m, n) * xi(c, i + m, j + n);
                }
            }
        }
        acc
    })
}

/// Kernel with `r - 1` zeros inserted between taps: shape `r(k-1)+1` per axis.
pub fn zero_inserted(k: &Tensor, r: usize) -> Tensor {
    let (o, c, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let (eh, ew) = (r * (kh - 1) + 1, r * (kw - 1) + 1);
    let mut out = Tensor::zeros(&[o, c, eh, ew]);
    for a in 0..o * c {
        for m in 0..kh {
            for n in 0..kw {
                out.data_mut()[(a * eh + m * r) * ew + n * r] = k.data()[(a * kh + m) * kw + n];
            }
        }
    }
    out
}

/// Empirical receptive field: rows/columns of the input that can change one
/// output cell of a conv/pool stack, found by perturbing every input cell.
pub fn perturbation_cone(layers: &[StackLayer], h: usize, w: usize) -> (usize, usize) {
    let forward = |x: &Tensor| -> Tensor {
        let mut t = x.clone();
        for layer in layers {
            t = match *layer {
                StackLayer::Conv(spec) => {
                    let k = Tensor::filled(&spec.kernel_shape(), 1.0);
                    dilated_conv2d(&t, &spec, &k, &Tensor::zeros(&[spec.out_channels])).unwrap()
                }
                StackLayer::Pool { height, width } => {
                    // sum pool: same support as max pool without winner effects
                    let (c, th, tw) = (t.shape()[0], t.shape()[1], t.shape()[2]);
                    let (oh, ow) = (th / height, tw / width);
                    Tensor::from_fn(&[c, oh, ow], |idx| {
                        let (ch, i, j) = (idx / (oh * ow), (idx / ow) % oh, idx % ow);
                        let mut s = 0.0;
                        for a in 0..height {
                            for b in 0..width {
                                s += t.data()[(ch * th + i * height + a) * tw + j * width + b];
                            }
                        }
                        s
                    })
                }
            };
        }
        t
    };
    let base = forward(&Tensor::zeros(&[1, h, w]));
    let (mut rows, mut cols) = (Vec::new(), Vec::new());
    for i in 0..h {
        for j in 0..w {
            let mut x = Tensor::zeros(&[1, h, w]);
            x.data_mut()[i * w + j] = 1.0;
            if forward(&x).data()[0] != base.data()[0] {
                rows.push(i);
                cols.push(j);
            }
        }
    }
    let extent = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap() + 1;
    (extent(&rows), extent(&cols))
}

/// Ward linkage from scratch: every step rescans all active cluster pairs using
/// `sqrt(2 |A| |B| / (|A| + |B|)) * ||c_A - c_B||`. Returns `(a, b, distance, size)`.
pub fn naive_ward(features: &FeatureMatrix) -> Vec<(usize, usize, f64, usize)> {
    let p = features.n_features();
    let n = features.n_samples();
    let mut members: Vec<Option<Vec<usize>>> = (0..p).map(|i| Some(vec![i])).collect();
    let centroid = |m: &[usize]| -> Vec<f64> {
        (0..n).map(|r| m.iter().map(|&f| features.column(f)[r]).sum::<f64>() / m.len() as f64).collect()
    };
    let mut steps = Vec::new();
    for _ in 0..p - 1 {
        let active: Vec<usize> = (0..members.len()).filter(|&i| members[i].is_some()).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let (ma, mb) = (members[a].as_ref().unwrap(), members[b].as_ref().unwrap());
                let (ca, cb) = (centroid(ma), centroid(mb));
                let sq: f64 = ca.iter().zip(&cb).map(|(u, v)| (u - v) * (u - v)).sum();
                let (na, nb) = (ma.len() as f64, mb.len() as f64);
                let d = (2.0 * na * nb / (na + nb) * sq).sqrt();
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (d, a, b) = best.unwrap();
        let mut merged = members[a].take().unwrap();
        merged.extend(members[b].take().unwrap());
        steps.push((a, b, d, merged.len()));
        members.push(Some(merged));
    }
    steps
}

pub fn random_matrix(p: usize, n: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    FeatureMatrix::new((0..p).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()).unwrap()
}

/// An affine network: identity activations and a 1x1 pool, p = 14, t = 10.
/// Marked as trained so the explainer accepts it.
pub fn linear_network(seed: u64) -> HdlcnnModel {
    let mut cfg = ModelConfig::new(14, 10, 3, 7);
    cfg.conv1_channels = 3;
    cfg.conv2_channels = 4;
    cfg.activation = Activation::Identity;
    cfg.pool = (1, 1);
    cfg.seed = seed;
    let mut model = HdlcnnModel::build(cfg, FeatureOrdering::identity(14, 7).unwrap()).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let params = model.params_mut();
    for b in [
        &mut params.segment1_bias,
        &mut params.segment2_bias,
        &mut params.conv2_bias,
        &mut params.head_bias,
    ] {
        b.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
    }
    mark_trained(model)
}

/// One zero-learning-rate epoch: parameters stay put, the epoch counter moves.
pub fn mark_trained(mut model: HdlcnnModel) -> HdlcnnModel {
    let cfg = model.config().clone();
    let names: Vec<String> = (0..cfg.n_features).map(|i| format!("f{i}")).collect();
    let rows = vec![vec![0.0; cfg.n_features], vec![1.0; cfg.n_features]];
    let stats = fit_normalizer(&SeriesTable::from_rows(names.clone(), rows).unwrap());
    let sample = Sample {
        x: Tensor::zeros(&[1, cfg.n_features, cfg.n_timesteps]),
        label: 0,
    };
    let classes = (0..cfg.n_classes).map(|c| format!("c{c}")).collect();
    let ds = Dataset::new(vec![sample], classes, names, stats)
        .and_then(|d| d.with_ordering(model.ordering()))
        .unwrap();
    let tc = TrainConfig {
        epochs: 1,
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    train(&mut model, &ds, &tc).unwrap();
    model
}

/// Evaluates the target logit of `model` on a flat `[p * t]` input.
pub fn logit_fn(model: &HdlcnnModel, target: usize) -> impl Fn(&[f64]) -> f64 + '_ {
    let shape = model.sample_shape().to_vec();
    move |z: &[f64]| model.sample_logits(&Tensor::new(shape.clone(), z.to_vec()).unwrap()).unwrap().data()[target]
}

/// Weights `beta` and offset of an affine function, read off by probing unit vectors.
pub fn affine_coefficients(f: &dyn Fn(&[f64]) -> f64, n: usize) -> (Vec<f64>, f64) {
    let zero = vec![0.0; n];
    let b0 = f(&zero);
    let beta = (0..n)
        .map(|i| {
            let mut e = zero.clone();
            e[i] = 1.0;
            f(&e) - b0
        })
        .collect();
    (beta, b0)
}

pub fn conv_spec(c_in: usize, c_out: usize, k: (usize, usize), r: usize, s: usize) -> ConvSpec {
    ConvSpec {
        stride: s,
        ..ConvSpec::new(c_in, c_out, k, r)
    }
}

/// `c . (W x + b)` for a fixed positive readout `c`.
#[derive(Clone)]
pub struct LinearReadout {
    pub weights: Tensor,
    pub bias: Tensor,
    pub readout: Tensor,
}

impl Differentiable for LinearReadout {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
    fn param(&self, i: usize) -> f64 {
        let n = self.weights.len();
        if i < n { self.weights.data()[i] } else { self.bias.data()[i - n] }
    }
    fn set_param(&mut self, i: usize, v: f64) {
        let n = self.weights.len();
        if i < n { self.weights.data_mut()[i] = v } else { self.bias.data_mut()[i - n] = v }
    }
    fn probe_loss(&self, x: &Tensor) -> f64 {
        linear(x, &self.weights, &self.bias).unwrap().dot(&self.readout).unwrap()
    }
    fn probe_gradients(&self, x: &Tensor) -> (Vec<f64>, Tensor) {
        let g = linear_backward(&self.readout, x, &self.weights).unwrap();
        let mut flat = g.weights.into_data();
        flat.extend_from_slice(g.bias.data());
        (flat, g.input)
    }
}

/// `c . conv(x)` for one dilated convolution.
#[derive(Clone)]
pub struct ConvReadout {
    pub spec: ConvSpec,
    pub kernels: Tensor,
    pub bias: Tensor,
    pub readout: Tensor,
}

impl Differentiable for ConvReadout {
    fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }
    fn param(&self, i: usize) -> f64 {
        let n = self.kernels.len();
        if i < n { self.kernels.data()[i] } else { self.bias.data()[i - n] }
    }
    fn set_param(&mut self, i: usize, v: f64) {
        let n = self.kernels.len();
        if i < n { self.kernels.data_mut()[i] = v } else { self.bias.data_mut()[i - n] = v }
    }
    fn probe_loss(&self, x: &Tensor) -> f64 {
        dilated_conv2d(x, &self.spec, &self.kernels, &self.bias).unwrap().dot(&self.readout).unwrap()
    }
    fn probe_gradients(&self, x: &Tensor) -> (Vec<f64>, Tensor) {
        let g = conv2d_backward_with_input(&self.readout, x, &self.spec, &self.kernels).unwrap();
        let mut flat = g.kernels.into_data();
        flat.extend_from_slice(g.bias.data());
        (flat, g.input)
    }
}

/// `c . logits` of an affine network (identity activations, 1x1 pool).
#[derive(Clone)]
pub struct AffineNetReadout {
    pub model: HdlcnnModel,
    pub readout: Tensor,
}

impl Differentiable for AffineNetReadout {
    fn param_count(&self) -> usize {
        self.model.params().count()
    }
    fn param(&self, i: usize) -> f64 {
        self.model.params().get(i)
    }
    fn set_param(&mut self, i: usize, v: f64) {
        self.model.params_mut().set(i, v);
    }
    fn probe_loss(&self, x: &Tensor) -> f64 {
        self.model.sample_logits(x).unwrap().dot(&self.readout).unwrap()
    }
    fn probe_gradients(&self, x: &Tensor) -> (Vec<f64>, Tensor) {
        let trace = self.model.trace(x).unwrap();
        let (g, gx) = self.model.backward(&trace, &self.readout).unwrap();
        (g.flatten(), gx)
    }
}

/// Affine HDLCNN with positive parameters so no gradient cancels to near zero.
pub fn positive_affine_net(seed: u64) -> AffineNetReadout {
    let mut cfg = ModelConfig::new(14, 10, 3, 7);
    cfg.conv1_channels = 3;
    cfg.conv2_channels = 4;
    cfg.activation = Activation::Identity;
    cfg.pool = (1, 1);
    let mut model = HdlcnnModel::build(cfg, FeatureOrdering::identity(14, 7).unwrap()).unwrap();
    let mut r = rng(seed);
    for i in 0..model.params().count() {
        model.params_mut().set(i, r.random_range(0.1..0.5));
    }
    let readout = random_tensor(&[3], &mut r, 0.5, 1.5);
    AffineNetReadout { model, readout }
}

/// Distance of `x` from the nearest non-differentiable point of `model`: the
/// smallest |pre-activation| and the smallest gap between a pool winner and
/// its runner-up.
pub fn kink_margin(model: &HdlcnnModel, x: &Tensor) -> f64 {
    let tr = model.trace(x).unwrap();
    let pre = tr.segment_pre.iter().chain([&tr.conv2_pre]);
    let mut margin = pre.flat_map(|t| t.data().iter().map(|v| v.abs())).fold(f64::INFINITY, f64::min);
    let (ph, pw) = model.config().pool;
    let [c, h, w] = model.shapes().conv2;
    let post = tr.conv2_post.data();
    for ch in 0..c {
        for i in 0..h / ph {
            for j in 0..w / pw {
                let mut vals: Vec<f64> = (0..ph * pw)
                    .map(|k| post[(ch * h + i * ph + k / pw) * w + j * pw + k % pw])
                    .collect();
                vals.sort_by(|a, b| b.total_cmp(a));
                if vals[0] > 0.0 {
                    margin = margin.min(vals[0] - vals[1]);
                }
            }
        }
    }
    margin
}

