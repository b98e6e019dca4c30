//! Tensor container and the forward/backward kernels the classifier is built from.
//!
//! All kernels are pure functions of their inputs. Layers that need saved state
//! for the backward pass read it from an explicit [`LayerCache`].

mod activation;
mod conv;
mod gradcheck;
mod linear;
mod pool;
mod receptive;
mod softmax;
mod tensor;

pub use activation::{relu, relu_backward, relu_cached};
pub use conv::{
    conv2d_backward_input, conv2d_backward_with_input, dilated_conv2d, dilated_conv2d_backward,
    dilated_conv2d_cached, ConvGrads, ConvSpec,
};
pub use gradcheck::{grad_check, relative_error, Differentiable};
pub use linear::{linear, linear_backward, LinearGrads};
pub use pool::{max_pool2d, max_pool2d_backward, max_pool2d_cached, route_pooled};
pub use receptive::{receptive_field_size, ReceptiveField, StackLayer};
pub use softmax::{softmax, softmax_cross_entropy, CrossEntropy};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid tensor shape {0:?}: dimensions must be positive")]
    InvalidShape(Vec<usize>),
    #[error("tensor data length {actual} does not match shape {shape:?} (expected {expected})")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("{what}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("{what}: expected rank {expected}, got shape {actual:?}")]
    Rank {
        what: String,
        expected: usize,
        actual: Vec<usize>,
    },
    #[error("{dimension} mismatch: {detail}")]
    Dimension { dimension: String, detail: String },
    #[error("dilated kernel {axis} extent {extent} exceeds input {axis} {input}")]
    KernelTooLarge {
        axis: &'static str,
        extent: usize,
        input: usize,
    },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("pooling window {pool_h}x{pool_w} does not divide input {height}x{width}")]
    PoolNotDivisible {
        pool_h: usize,
        pool_w: usize,
        height: usize,
        width: usize,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("layer cache is {0}")]
    Cache(&'static str),
    #[error("gradient check epsilon {0} outside (0, 1e-3]")]
    Epsilon(f64),
}

/// Saved forward-pass state consumed by a backward call.
#[derive(Debug, Clone, Default)]
pub struct LayerCache {
    pub input: Option<Tensor>,
    /// Flat input index of each pooled output's winner.
    pub argmax: Option<Vec<usize>>,
    pub pre_activation: Option<Tensor>,
}

impl LayerCache {
    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_none() && self.argmax.is_none() && self.pre_activation.is_none()
    }
}
