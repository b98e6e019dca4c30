use super::ConvSpec;

/// One layer of a stack whose receptive field is being measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StackLayer {
    Conv(ConvSpec),
    /// Non-overlapping pool: kernel = stride = window, dilation 1.
    Pool { height: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub height: usize,
    pub width: usize,
}

impl StackLayer {
    /// (kernel, stride, dilation) along the height and width axes.
    fn geometry(&self) -> [(usize, usize, usize); 2] {
        match *self {
            StackLayer::Conv(s) => [
                (s.kernel_height, s.stride, s.dilation),
                (s.kernel_width, s.stride, s.dilation),
            ],
            StackLayer::Pool { height, width } => [(height, height, 1), (width, width, 1)],
        }
    }
}

/// Input-level receptive field of `top_size` adjacent cells of the last layer.
///
/// Walks the stack from the top down with
/// `c_l = s * c_{l+1} + (r * (k - 1) + 1 - s)`.
pub fn receptive_field_size(layers: &[StackLayer], top_size: usize) -> ReceptiveField {
    let mut c = [top_size; 2];
    for layer in layers.iter().rev() {
        for (axis, (k, s, r)) in layer.geometry().into_iter().enumerate() {
            c[axis] = s * c[axis] + (r * (k - 1) + 1) - s;
        }
    }
    ReceptiveField {
        height: c[0],
        width: c[1],
    }
}
