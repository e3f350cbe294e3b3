//! Cross-entropy over logits, stabilized by max subtraction.

use crate::error::{Error, Result};
use crate::ops::Matrix;

/// Mean cross-entropy of the batch and its gradient with respect to the
/// logits: `(softmax - onehot) / batch`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let batch = logits.rows();
    let n = logits.cols();
    if labels.len() != batch {
        return Err(Error::InvalidParameter(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {n} classes"
        )));
    }
    let mut grad = Matrix::zeros(batch, n);
    let mut total = 0.0;
    let inv_batch = 1.0 / batch as f64;
    for b in 0..batch {
        let row = logits.row(b);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &z in row {
            denom += (z - max).exp();
        }
        let log_denom = denom.ln();
        total += log_denom - (row[labels[b]] - max);
        let g = grad.row_mut(b);
        for (j, &z) in row.iter().enumerate() {
            g[j] = (z - max).exp() / denom * inv_batch;
        }
        g[labels[b]] -= inv_batch;
    }
    Ok((total * inv_batch, grad))
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if logits.rows() == 0 {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(b, &y)| crate::ops::argmax(logits.row(*b)) == y)
        .count();
    hits as f64 / logits.rows() as f64
}
