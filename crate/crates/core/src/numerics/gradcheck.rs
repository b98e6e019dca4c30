use rayon::prelude::*;

use super::{NumericsError, Tensor};

/// A layer or network with a scalar probe loss and analytic gradients of it.
pub trait Differentiable: Clone + Send + Sync {
    fn param_count(&self) -> usize;
    fn param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
    fn probe_loss(&self, input: &Tensor) -> f64;
    /// Gradient of the probe loss with respect to every parameter (flat, in
    /// `param` index order) and to the input.
    fn probe_gradients(&self, input: &Tensor) -> (Vec<f64>, Tensor);
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Max relative error between analytic gradients and central differences
/// over every parameter and input coordinate.
pub fn grad_check<D: Differentiable>(net: &D, input: &Tensor, epsilon: f64) -> Result<f64, NumericsError> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(NumericsError::Epsilon(epsilon));
    }
    let (param_grads, input_grad) = net.probe_gradients(input);

    let param_err = (0..net.param_count())
        .into_par_iter()
        .map_init(
            || net.clone(),
            |local, i| {
                let orig = local.param(i);
                local.set_param(i, orig + epsilon);
                let up = local.probe_loss(input);
                local.set_param(i, orig - epsilon);
                let down = local.probe_loss(input);
                local.set_param(i, orig);
                relative_error(param_grads[i], (up - down) / (2.0 * epsilon))
            },
        )
        .reduce(|| 0.0, f64::max);

    let input_err = (0..input.len())
        .into_par_iter()
        .map_init(
            || input.clone(),
            |x, i| {
                let orig = x.data()[i];
                x.data_mut()[i] = orig + epsilon;
                let up = net.probe_loss(x);
                x.data_mut()[i] = orig - epsilon;
                let down = net.probe_loss(x);
                x.data_mut()[i] = orig;
                relative_error(input_grad.data()[i], (up - down) / (2.0 * epsilon))
            },
        )
        .reduce(|| 0.0, f64::max);

    Ok(param_err.max(input_err))
}
