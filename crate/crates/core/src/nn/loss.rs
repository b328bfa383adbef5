//! Losses returning the value together with the gradient with respect to
//! the prediction.
//!
//! `mse` averages over every element of the batch, so a `(n, d)` input is
//! normalised by `n * d`.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dims("mse target", pred.len(), target.len()));
    }
    let n = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((value, diff * (2.0 / n)))
}

/// Mean squared error restricted to entries where `weight` is 1, averaged
/// over the number of active entries. Gradients at inactive entries are
/// exactly zero.
pub fn masked_mse(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weight: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dims("masked mse target", pred.len(), target.len()));
    }
    if pred.dim() != weight.dim() {
        return Err(Error::dims("masked mse weight", pred.len(), weight.len()));
    }
    let active: f64 = weight.iter().sum();
    let n = active.max(1.0);
    let mut grad = &pred - &target;
    grad *= &weight;
    let value = grad.iter().map(|d| d * d).sum::<f64>() / n;
    grad *= 2.0 / n;
    Ok((value, grad))
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Cross-entropy of a single logit vector against a class index.
pub fn softmax_ce(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::dims("softmax label", logits.len(), label + 1));
    }
    let logp = log_softmax(logits);
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[label] -= 1.0;
    Ok((-logp[label], grad))
}

/// Batch mean of [`softmax_ce`].
pub fn softmax_ce_batch(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::dims("softmax labels", logits.nrows(), labels.len()));
    }
    let n = labels.len().max(1) as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).to_vec();
        let (v, g) = softmax_ce(&row, label)?;
        total += v;
        grad.row_mut(i).assign(&(Array1::from(g) / n));
    }
    Ok((total / n, grad))
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}
