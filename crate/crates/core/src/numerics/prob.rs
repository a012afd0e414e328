use crate::error::{Error, Result};

/// Clamp floor applied to predicted probabilities before taking logs.
pub const LOG_EPS: f64 = 1e-12;

/// Shift-invariant softmax of a vector.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `H(target, predicted) = −Σ target_i · log(max(predicted_i, ε))`.
pub fn cross_entropy(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "cross entropy",
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    for (name, v) in [("predicted", predicted), ("target", target)] {
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > 1e-6 || v.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "{name} is not a probability vector (sum {total})"
            )));
        }
    }
    Ok(-predicted
        .iter()
        .zip(target)
        .map(|(&p, &t)| t * p.clamp(LOG_EPS, 1.0).ln())
        .sum::<f64>())
}
