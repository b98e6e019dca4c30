use super::{LayerCache, NumericsError, Tensor};

/// Non-overlapping max pooling over `[C, H, W]` with stride equal to the window.
///
/// Returns the pooled tensor and, for each output cell, the flat input index of
/// its winner. Ties go to the lowest flat index.
pub fn max_pool2d(
    input: &Tensor,
    pool_h: usize,
    pool_w: usize,
) -> Result<(Tensor, Vec<usize>), NumericsError> {
    input.expect_rank(3, "max-pool input")?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if pool_h == 0 || pool_w == 0 || h % pool_h != 0 || w % pool_w != 0 {
        return Err(NumericsError::PoolNotDivisible {
            pool_h,
            pool_w,
            height: h,
            width: w,
        });
    }
    let (oh, ow) = (h / pool_h, w / pool_w);
    let x = input.data();
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = ch * h * w + (i * pool_h) * w + j * pool_w;
                for a in 0..pool_h {
                    for b in 0..pool_w {
                        let idx = ch * h * w + (i * pool_h + a) * w + j * pool_w + b;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.data_mut()[(ch * oh + i) * ow + j] = x[best];
                winners.push(best);
            }
        }
    }
    Ok((out, winners))
}

pub fn max_pool2d_cached(
    input: &Tensor,
    pool_h: usize,
    pool_w: usize,
    cache: &mut LayerCache,
) -> Result<Tensor, NumericsError> {
    let (out, winners) = max_pool2d(input, pool_h, pool_w)?;
    cache.input = Some(input.clone());
    cache.argmax = Some(winners);
    Ok(out)
}

/// Routes each pooled gradient to its window's winner.
pub fn max_pool2d_backward(grad_out: &Tensor, cache: &LayerCache) -> Result<Tensor, NumericsError> {
    let winners = cache.argmax.as_ref().ok_or(NumericsError::Cache("empty"))?;
    let input = cache.input.as_ref().ok_or(NumericsError::Cache("empty"))?;
    if grad_out.len() != winners.len() {
        return Err(NumericsError::Cache("stale: argmax map does not match grad_out"));
    }
    route_pooled(grad_out, winners, input.shape())
}

/// Scatters `values[k]` onto `winners[k]` of a zero tensor with `input_shape`.
pub fn route_pooled(values: &Tensor, winners: &[usize], input_shape: &[usize]) -> Result<Tensor, NumericsError> {
    if values.len() != winners.len() {
        return Err(NumericsError::Dimension {
            dimension: "pooled cells".into(),
            detail: format!("{} values for {} winners", values.len(), winners.len()),
        });
    }
    let mut grad = Tensor::zeros(input_shape);
    let n = grad.len();
    for (&idx, &v) in winners.iter().zip(values.data()) {
        if idx >= n {
            return Err(NumericsError::Cache("stale: winner index outside input"));
        }
        grad.data_mut()[idx] += v;
    }
    Ok(grad)
}
