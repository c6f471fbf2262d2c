use super::tape::log_sum_exp;
use crate::error::{Error, Result};

/// Cross-entropy of one logit vector against a gold class, with its gradient
/// `softmax(z) - onehot(gold)`.
pub fn cross_entropy_loss(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= logits.len() {
        return Err(Error::invalid(format!("gold class {gold} out of range for {} logits", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let lse = log_sum_exp(logits);
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    grad[gold] -= 1.0;
    Ok((lse - logits[gold], grad))
}

/// Mean cross-entropy over a batch of logit rows.
pub fn mean_cross_entropy(rows: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if rows.len() != gold.len() || rows.is_empty() {
        return Err(Error::invalid("need one gold label per logit row and at least one row"));
    }
    let mut total = 0.0;
    for (r, &g) in rows.iter().zip(gold) {
        total += cross_entropy_loss(r, g)?.0;
    }
    Ok(total / rows.len() as f64)
}
