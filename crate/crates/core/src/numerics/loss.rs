//! Cross-entropy over raw logits.

use crate::error::{invalid_argument, numeric_error, Result};
use crate::scalar::Scalar;

use super::Matrix;

/// Mean cross-entropy over a batch of logit rows, with the gradient with
/// respect to the logits.
///
/// Row `b` of `logits` scores each class for example `b`; `labels[b]` is the
/// true class index. The per-row log-sum-exp subtracts the row maximum
/// before exponentiation. When `class_weights` is given (one non-negative
/// weight per class), rows are combined as a weighted mean with weights
/// `class_weights[labels[b]]`; `None` is the uniform case.
///
/// Errors if shapes disagree, a label is out of range, weights are invalid,
/// or the logits contain non-finite values.
pub fn cross_entropy_with_logits<S: Scalar>(
    logits: &Matrix<S>,
    labels: &[usize],
    class_weights: Option<&[S]>,
) -> Result<(S, Matrix<S>)> {
    let (batch, classes) = logits.shape();
    if batch != labels.len() {
        return Err(invalid_argument(format!(
            "{} logit rows but {} labels",
            batch,
            labels.len()
        )));
    }
    if batch == 0 || classes == 0 {
        return Err(invalid_argument("cross-entropy over an empty batch"));
    }
    if let Some(w) = class_weights {
        if w.len() != classes {
            return Err(invalid_argument(format!(
                "{} class weights for {} classes",
                w.len(),
                classes
            )));
        }
        if w.iter().any(|x| !x.is_finite() || *x < S::zero()) {
            return Err(invalid_argument("class weights must be finite and non-negative"));
        }
    }
    if logits.first_nonfinite().is_some() {
        return Err(numeric_error("cross_entropy logits"));
    }

    let mut loss = S::zero();
    let mut weight_sum = S::zero();
    let mut grad = Matrix::zeros(batch, classes);
    for b in 0..batch {
        let label = labels[b];
        if label >= classes {
            return Err(invalid_argument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(b);
        let max = row.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
        let mut denom = S::zero();
        for &x in row {
            denom += (x - max).exp();
        }
        let log_denom = denom.ln();
        let w = class_weights.map_or(S::one(), |cw| cw[label]);
        loss += w * (log_denom - (row[label] - max));
        weight_sum += w;
        let grad_row = grad.row_mut(b);
        for (g, &x) in grad_row.iter_mut().zip(row) {
            *g = w * (x - max).exp() / denom;
        }
        grad_row[label] -= w;
    }
    if weight_sum <= S::zero() {
        return Err(invalid_argument("all examples have zero class weight"));
    }
    loss /= weight_sum;
    grad.scale(S::one() / weight_sum);
    Ok((loss, grad))
}
