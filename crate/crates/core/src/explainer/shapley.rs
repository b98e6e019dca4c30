use super::ExplainError;

/// Largest player count [`exact_shapley`] will enumerate (2^20 coalitions).
pub const MAX_PLAYERS: usize = 20;

/// SHAP values of the linear model `beta0 + beta . x` against feature means:
/// `phi_i = beta_i x_i - beta_i E[X_i]`.
pub fn linear_shap(beta: &[f64], _beta0: f64, x: &[f64], means: &[f64]) -> Result<Vec<f64>, ExplainError> {
    if beta.len() != x.len() || x.len() != means.len() {
        return Err(ExplainError::Length(format!(
            "beta {}, x {}, means {}",
            beta.len(),
            x.len(),
            means.len()
        )));
    }
    Ok(beta
        .iter()
        .zip(x)
        .zip(means)
        .map(|((b, xi), mi)| b * xi - b * mi)
        .collect())
}

/// Exact Shapley values by enumerating every coalition of `players`.
///
/// A coalition `S` is scored as `f(z)` where `z` takes `x` on the indices of
/// players in `S` and `reference` everywhere else. Each player's value is
/// `sum_{S not containing i} |S|! (n - |S| - 1)! / n! * (v(S + i) - v(S))`.
pub fn exact_shapley(
    black_box: impl Fn(&[f64]) -> f64,
    x: &[f64],
    reference: &[f64],
    players: &[Vec<usize>],
) -> Result<Vec<f64>, ExplainError> {
    let n = players.len();
    if n > MAX_PLAYERS {
        return Err(ExplainError::TooManyPlayers { players: n, max: MAX_PLAYERS });
    }
    if x.len() != reference.len() {
        return Err(ExplainError::Length(format!("x {}, reference {}", x.len(), reference.len())));
    }
    if let Some(&bad) = players.iter().flatten().find(|&&i| i >= x.len()) {
        return Err(ExplainError::Length(format!("player index {bad} outside input of {}", x.len())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut value = vec![0.0; 1 << n];
    let mut z = reference.to_vec();
    for (mask, v) in value.iter_mut().enumerate() {
        z.copy_from_slice(reference);
        for (p, group) in players.iter().enumerate() {
            if mask & (1 << p) != 0 {
                for &i in group {
                    z[i] = x[i];
                }
            }
        }
        *v = black_box(&z);
    }

    // weight(s) = s! (n-s-1)! / n! = 1 / (n * C(n-1, s))
    let mut weight = vec![0.0; n];
    let mut binom = 1.0;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let phi = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << n)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (value[m | bit] - value[m]))
                .sum()
        })
        .collect();
    Ok(phi)
}
