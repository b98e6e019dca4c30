use super::{LayerCache, NumericsError, Tensor};

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_cached(input: &Tensor, cache: &mut LayerCache) -> Tensor {
    cache.pre_activation = Some(input.clone());
    relu(input)
}

/// `grad_out * 1[x > 0]`; the derivative at exactly zero is taken as 0.
pub fn relu_backward(grad_out: &Tensor, cache: &LayerCache) -> Result<Tensor, NumericsError> {
    let pre = cache.pre_activation.as_ref().ok_or(NumericsError::Cache("empty"))?;
    if pre.shape() != grad_out.shape() {
        return Err(NumericsError::Cache("stale: pre-activation does not match grad_out"));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(pre.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}
