use serde::{Deserialize, Serialize};

use super::{LayerCache, NumericsError, Tensor};

/// Hyperparameters of one dilated 2-D convolution layer (no padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize), dilation: usize) -> Self {
        Self {
            kernel_height: kernel.0,
            kernel_width: kernel.1,
            stride: 1,
            dilation,
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        let fields = [
            ("kernel_height", self.kernel_height),
            ("kernel_width", self.kernel_width),
            ("stride", self.stride),
            ("dilation", self.dilation),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(NumericsError::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Span covered by the dilated kernel along the height axis: `r(k-1)+1`.
    pub fn extent_height(&self) -> usize {
        self.dilation * (self.kernel_height - 1) + 1
    }

    pub fn extent_width(&self) -> usize {
        self.dilation * (self.kernel_width - 1) + 1
    }

    /// Output spatial size for an `height x width` input.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize), NumericsError> {
        self.validate()?;
        let (eh, ew) = (self.extent_height(), self.extent_width());
        if eh > height {
            return Err(NumericsError::KernelTooLarge {
                axis: "height",
                extent: eh,
                input: height,
            });
        }
        if ew > width {
            return Err(NumericsError::KernelTooLarge {
                axis: "width",
                extent: ew,
                input: width,
            });
        }
        Ok(((height - eh) / self.stride + 1, (width - ew) / self.stride + 1))
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_height, self.kernel_width]
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

fn check_args(
    input: &Tensor,
    spec: &ConvSpec,
    kernels: &Tensor,
) -> Result<(usize, usize, usize, usize), NumericsError> {
    spec.validate()?;
    input.expect_rank(3, "convolution input")?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if c != spec.in_channels {
        return Err(NumericsError::Dimension {
            dimension: "in_channels".into(),
            detail: format!("input has {c} channels, spec expects {}", spec.in_channels),
        });
    }
    kernels.expect_shape(&spec.kernel_shape(), "convolution kernels")?;
    let (oh, ow) = spec.output_dims(h, w)?;
    Ok((h, w, oh, ow))
}

/// Dilated 2-D convolution (cross-correlation form, no padding).
///
/// `out[o, i, j] = bias[o] + sum_{c, m, n} K[o, c, m, n] * x[c, i*s + r*m, j*s + r*n]`.
/// Accumulation order per output cell is bias first, then `(c, m, n)`
/// lexicographically; with `r = 1` this is the plain convolution.
pub fn dilated_conv2d(
    input: &Tensor,
    spec: &ConvSpec,
    kernels: &Tensor,
    bias: &Tensor,
) -> Result<Tensor, NumericsError> {
    let (h, w, oh, ow) = check_args(input, spec, kernels)?;
    bias.expect_shape(&[spec.out_channels], "convolution bias")?;
    let (kh, kw, r, s) = (spec.kernel_height, spec.kernel_width, spec.dilation, spec.stride);
    let x = input.data();
    let k = kernels.data();
    let mut out = Tensor::zeros(&[spec.out_channels, oh, ow]);
    let plane = oh * ow;
    for (o, out_plane) in out.data_mut().chunks_mut(plane).enumerate() {
        out_plane.iter_mut().for_each(|v| *v = bias.data()[o]);
        for c in 0..spec.in_channels {
            let x_plane = &x[c * h * w..(c + 1) * h * w];
            for m in 0..kh {
                for n in 0..kw {
                    let weight = k[((o * spec.in_channels + c) * kh + m) * kw + n];
                    for i in 0..oh {
                        let row = &x_plane[(i * s + r * m) * w..(i * s + r * m + 1) * w];
                        let out_row = &mut out_plane[i * ow..(i + 1) * ow];
                        if s == 1 {
                            let src = &row[r * n..r * n + ow];
                            for (dst, xv) in out_row.iter_mut().zip(src) {
                                *dst += weight * xv;
                            }
                        } else {
                            for (j, dst) in out_row.iter_mut().enumerate() {
                                *dst += weight * row[j * s + r * n];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Forward pass that records its input in `cache` for [`dilated_conv2d_backward`].
pub fn dilated_conv2d_cached(
    input: &Tensor,
    spec: &ConvSpec,
    kernels: &Tensor,
    bias: &Tensor,
    cache: &mut LayerCache,
) -> Result<Tensor, NumericsError> {
    let out = dilated_conv2d(input, spec, kernels, bias)?;
    cache.input = Some(input.clone());
    Ok(out)
}

pub fn dilated_conv2d_backward(
    grad_out: &Tensor,
    cache: &LayerCache,
    spec: &ConvSpec,
    kernels: &Tensor,
) -> Result<ConvGrads, NumericsError> {
    let input = cache.input.as_ref().ok_or(NumericsError::Cache("empty"))?;
    let (_, _, oh, ow) = check_args(input, spec, kernels)?;
    if grad_out.shape() != [spec.out_channels, oh, ow] {
        return Err(NumericsError::Cache("stale: saved input does not match grad_out"));
    }
    conv2d_backward_with_input(grad_out, input, spec, kernels)
}

/// Gradients of the convolution given the forward input directly.
pub fn conv2d_backward_with_input(
    grad_out: &Tensor,
    input: &Tensor,
    spec: &ConvSpec,
    kernels: &Tensor,
) -> Result<ConvGrads, NumericsError> {
    let (h, w, oh, ow) = check_args(input, spec, kernels)?;
    grad_out.expect_shape(&[spec.out_channels, oh, ow], "convolution grad_out")?;
    let grad_input = conv2d_backward_input(grad_out, spec, kernels, (h, w))?;
    let (kh, kw, r, s) = (spec.kernel_height, spec.kernel_width, spec.dilation, spec.stride);
    let x = input.data();
    let g = grad_out.data();
    let mut grad_k = Tensor::zeros(&spec.kernel_shape());
    let mut grad_b = Tensor::zeros(&[spec.out_channels]);
    let plane = oh * ow;
    for o in 0..spec.out_channels {
        let g_plane = &g[o * plane..(o + 1) * plane];
        grad_b.data_mut()[o] = g_plane.iter().sum();
        for c in 0..spec.in_channels {
            let x_plane = &x[c * h * w..(c + 1) * h * w];
            for m in 0..kh {
                for n in 0..kw {
                    let mut acc = 0.0;
                    for i in 0..oh {
                        let row = &x_plane[(i * s + r * m) * w..(i * s + r * m + 1) * w];
                        let g_row = &g_plane[i * ow..(i + 1) * ow];
                        if s == 1 {
                            acc += g_row
                                .iter()
                                .zip(&row[r * n..r * n + ow])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        } else {
                            for (j, gv) in g_row.iter().enumerate() {
                                acc += gv * row[j * s + r * n];
                            }
                        }
                    }
                    grad_k.data_mut()[((o * spec.in_channels + c) * kh + m) * kw + n] = acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        kernels: grad_k,
        bias: grad_b,
    })
}

/// Transpose of the convolution with respect to its input: scatters
/// `grad_out` back through `kernels` onto an `input_hw` grid.
pub fn conv2d_backward_input(
    grad_out: &Tensor,
    spec: &ConvSpec,
    kernels: &Tensor,
    input_hw: (usize, usize),
) -> Result<Tensor, NumericsError> {
    spec.validate()?;
    kernels.expect_shape(&spec.kernel_shape(), "convolution kernels")?;
    let (h, w) = input_hw;
    let (oh, ow) = spec.output_dims(h, w)?;
    grad_out.expect_shape(&[spec.out_channels, oh, ow], "convolution grad_out")?;
    let (kh, kw, r, s) = (spec.kernel_height, spec.kernel_width, spec.dilation, spec.stride);
    let k = kernels.data();
    let g = grad_out.data();
    let mut grad_in = Tensor::zeros(&[spec.in_channels, h, w]);
    let gi = grad_in.data_mut();
    let plane = oh * ow;
    for o in 0..spec.out_channels {
        let g_plane = &g[o * plane..(o + 1) * plane];
        for c in 0..spec.in_channels {
            let gi_plane = &mut gi[c * h * w..(c + 1) * h * w];
            for m in 0..kh {
                for n in 0..kw {
                    let weight = k[((o * spec.in_channels + c) * kh + m) * kw + n];
                    for i in 0..oh {
                        let base = (i * s + r * m) * w;
                        let g_row = &g_plane[i * ow..(i + 1) * ow];
                        if s == 1 {
                            let dst = &mut gi_plane[base + r * n..base + r * n + ow];
                            for (d, gv) in dst.iter_mut().zip(g_row) {
                                *d += weight * gv;
                            }
                        } else {
                            for (j, gv) in g_row.iter().enumerate() {
                                gi_plane[base + j * s + r * n] += weight * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}
