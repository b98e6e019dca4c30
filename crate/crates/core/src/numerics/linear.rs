use super::{NumericsError, Tensor};

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weights: &Tensor) -> Result<(usize, usize), NumericsError> {
    input.expect_rank(1, "linear input")?;
    weights.expect_rank(2, "linear weights")?;
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != n {
        return Err(NumericsError::Dimension {
            dimension: "linear input".into(),
            detail: format!("weights expect {n} inputs, got {}", input.len()),
        });
    }
    Ok((m, n))
}

/// `W x + b`.
pub fn linear(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, n) = check(input, weights)?;
    bias.expect_shape(&[m], "linear bias")?;
    let x = input.data();
    let out = weights
        .data()
        .chunks(n)
        .zip(bias.data())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, xv)| w * xv).sum::<f64>())
        .collect();
    Tensor::new(vec![m], out)
}

pub fn linear_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
) -> Result<LinearGrads, NumericsError> {
    let (m, n) = check(input, weights)?;
    grad_out.expect_shape(&[m], "linear grad_out")?;
    let g = grad_out.data();
    let mut grad_in = vec![0.0; n];
    for (row, &gv) in weights.data().chunks(n).zip(g) {
        for (gi, w) in grad_in.iter_mut().zip(row) {
            *gi += gv * w;
        }
    }
    let mut grad_w = Vec::with_capacity(m * n);
    for &gv in g {
        grad_w.extend(input.data().iter().map(|xv| gv * xv));
    }
    Ok(LinearGrads {
        input: Tensor::new(vec![n], grad_in)?,
        weights: Tensor::new(vec![m, n], grad_w)?,
        bias: grad_out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input() {
        let x = Tensor::vector(vec![1.5, -2.0, 0.25]).unwrap();
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(linear(&x, &eye, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn small_example() {
        let w = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let x = Tensor::vector(vec![3.0, 4.0]).unwrap();
        let b = Tensor::vector(vec![1.0]).unwrap();
        assert_eq!(linear(&x, &w, &b).unwrap().data(), &[12.0]);
    }

    #[test]
    fn head_dimensions() {
        let w = Tensor::filled(&[11, 960], 0.001);
        let x = Tensor::filled(&[960], 1.0);
        assert_eq!(linear(&x, &w, &Tensor::zeros(&[11])).unwrap().shape(), &[11]);
    }

    #[test]
    fn rejects_mismatch() {
        let w = Tensor::zeros(&[2, 3]);
        assert!(linear(&Tensor::zeros(&[4]), &w, &Tensor::zeros(&[2])).is_err());
        assert!(linear(&Tensor::zeros(&[3]), &w, &Tensor::zeros(&[3])).is_err());
    }
}
