use crate::error::{Error, Result};
use crate::ndcore::Matrix2D;

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(logits: &Matrix2D) -> Matrix2D {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CrossEntropy {
    /// Mean negative log-probability of the true class.
    pub loss: f64,
    /// `(softmax − onehot) / b`.
    pub grad_logits: Matrix2D,
    pub probs: Matrix2D,
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix2D, labels: &[usize]) -> Result<CrossEntropy> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} rows of logits",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::arg(format!(
            "label {l} at row {i} is out of range for {classes} classes"
        )));
    }
    let b = logits.rows().max(1) as f64;
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // log-sum-exp form keeps the loss finite when the true-class prob underflows
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let g = grad.row_mut(r);
        g[label] -= 1.0;
        for v in g.iter_mut() {
            *v /= b;
        }
    }
    Ok(CrossEntropy {
        loss: loss / b,
        grad_logits: grad,
        probs,
    })
}
