use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to this floor before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Mean sparse categorical cross-entropy, accumulated in f64.
pub fn loss_sparse_ce<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let n = probs.rows();
    let k = probs.row_len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::Label { label: l, classes: k });
        }
        let p = probs.row(i)[l].as_f64().clamp(LOG_CLAMP, 1.0);
        total -= p.ln();
    }
    Ok(total / n as f64)
}
