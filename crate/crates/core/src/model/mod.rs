//! The hierarchical dilated-convolution classifier.
//!
//! Per sample `[1, p, t]` (features already permuted so that rows `0..m` hold
//! one feature cluster and `m..p` the other):
//!
//! 1. split rows at `m` into two segments
//! 2. one dilated conv (+ activation) per segment, with separate weights
//! 3. concatenate the two feature maps along the height axis
//! 4. a second dilated conv (+ activation) over the concatenation
//! 5. non-overlapping max pool
//! 6. flatten
//! 7. linear head to class logits, softmax to probabilities

mod io;
mod metrics;
mod network;
mod train;

pub use metrics::{evaluate, Metrics};
pub use network::{HdlcnnModel, Params, ProbeLoss, Trace, PARAM_NAMES};
pub(crate) use network::split_height;
pub use train::{train, EpochStats, Optimizer, TrainConfig};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterError;
use crate::framing::FramingError;
use crate::numerics::{ConvSpec, NumericsError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input shape {actual:?} does not match model input {expected:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("dataset mismatch: {0}")]
    Dataset(String),
    #[error("invalid training config: {0}")]
    Train(String),
    #[error("forward trace is stale (model updated since it was recorded)")]
    StaleTrace,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Ordering(#[from] ClusterError),
    #[error(transparent)]
    Format(#[from] FramingError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// No nonlinearity; with a 1x1 pool the whole network is affine.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_features: usize,
    pub n_timesteps: usize,
    pub n_classes: usize,
    /// Number of rows in the first segment.
    pub boundary: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: (usize, usize),
    pub dilation: usize,
    pub pool: (usize, usize),
    pub activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    /// 16/32 channels, 3x3 kernels at dilation 2, 2x2 pool, relu.
    pub fn new(n_features: usize, n_timesteps: usize, n_classes: usize, boundary: usize) -> Self {
        Self {
            n_features,
            n_timesteps,
            n_classes,
            boundary,
            conv1_channels: 16,
            conv2_channels: 32,
            kernel: (3, 3),
            dilation: 2,
            pool: (2, 2),
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn segment_conv(&self) -> ConvSpec {
        ConvSpec::new(1, self.conv1_channels, self.kernel, self.dilation)
    }

    pub fn merge_conv(&self) -> ConvSpec {
        ConvSpec::new(self.conv1_channels, self.conv2_channels, self.kernel, self.dilation)
    }

    pub fn segment_heights(&self) -> (usize, usize) {
        (self.boundary, self.n_features.saturating_sub(self.boundary))
    }

    /// Shapes of every intermediate tensor for one sample, or a diagnostic
    /// naming the first stage that does not fit.
    pub fn shapes(&self) -> Result<ShapeLedger, ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if [self.conv1_channels, self.conv2_channels, self.kernel.0, self.kernel.1, self.dilation]
            .contains(&0)
        {
            return bad("channels, kernel and dilation must be >= 1".into());
        }
        if self.pool.0 == 0 || self.pool.1 == 0 {
            return bad("pool dimensions must be >= 1".into());
        }
        if self.boundary == 0 || self.boundary >= self.n_features {
            return bad(format!(
                "boundary {} must split {} features into two non-empty segments",
                self.boundary, self.n_features
            ));
        }
        let seg = self.segment_conv();
        let need_h = seg.extent_height();
        let need_w = seg.extent_width();
        let (h1, h2) = self.segment_heights();
        for (i, h) in [(1, h1), (2, h2)] {
            if h < need_h {
                return bad(format!(
                    "segment {i} has {h} rows; a {}x{} kernel at dilation {} needs at least {need_h}",
                    self.kernel.0, self.kernel.1, self.dilation
                ));
            }
        }
        if self.n_timesteps < need_w {
            return bad(format!(
                "{} timesteps; the dilated kernel needs at least {need_w}",
                self.n_timesteps
            ));
        }
        let (o1, w1) = seg.output_dims(h1, self.n_timesteps)?;
        let (o2, _) = seg.output_dims(h2, self.n_timesteps)?;
        let concat_h = o1 + o2;
        let merge = self.merge_conv();
        if concat_h < merge.extent_height() || w1 < merge.extent_width() {
            return bad(format!(
                "concatenated map is {concat_h}x{w1}; the second dilated conv needs at least {}x{}",
                merge.extent_height(),
                merge.extent_width()
            ));
        }
        let (ch, cw) = merge.output_dims(concat_h, w1)?;
        if ch % self.pool.0 != 0 || cw % self.pool.1 != 0 {
            return bad(format!(
                "second conv output {ch}x{cw} is not divisible by the {}x{} pool",
                self.pool.0, self.pool.1
            ));
        }
        let (ph, pw) = (ch / self.pool.0, cw / self.pool.1);
        let c1 = self.conv1_channels;
        let c2 = self.conv2_channels;
        Ok(ShapeLedger {
            segment1: [c1, o1, w1],
            segment2: [c1, o2, w1],
            concat: [c1, concat_h, w1],
            conv2: [c2, ch, cw],
            pooled: [c2, ph, pw],
            flat: c2 * ph * pw,
            output: self.n_classes,
        })
    }
}

/// Per-sample shapes of the intermediate tensors (batch axis omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShapeLedger {
    pub segment1: [usize; 3],
    pub segment2: [usize; 3],
    pub concat: [usize; 3],
    pub conv2: [usize; 3],
    pub pooled: [usize; 3],
    pub flat: usize,
    pub output: usize,
}
