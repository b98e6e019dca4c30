use super::{NumericsError, Tensor};

#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    pub grad_logits: Tensor,
    pub probs: Tensor,
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<CrossEntropy, NumericsError> {
    logits.expect_rank(1, "logits")?;
    let k = logits.len();
    if label >= k {
        return Err(NumericsError::LabelOutOfRange { label, classes: k });
    }
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    let loss = -(z[label] - max - log_sum);
    let probs = softmax(z);
    let grad: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == label { p - 1.0 } else { p })
        .collect();
    Ok(CrossEntropy {
        loss,
        grad_logits: Tensor::new(vec![k], grad)?,
        probs: Tensor::new(vec![k], probs)?,
    })
}
