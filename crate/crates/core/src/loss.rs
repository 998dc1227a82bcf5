//! Loss functions returning the loss together with its derivative with
//! respect to the network output (or logits).

use crate::error::{expect_len, ModelError, Result};
use crate::linalg::{DenseMatrix, DenseVector, LinalgError};

/// Squared-error loss `‖t − o‖²` and error vector `−2(t − o)`.
pub fn mse_loss(output: &DenseVector, target: &DenseVector) -> Result<(f64, DenseVector)> {
    expect_len("target length", output.len(), target.len())?;
    let mut loss = 0.0;
    let error = output
        .0
        .iter()
        .zip(&target.0)
        .map(|(o, t)| {
            loss += (t - o) * (t - o);
            -2.0 * (t - o)
        })
        .collect();
    Ok((loss, DenseVector(error)))
}

/// Batch-mean squared-error loss; the returned errors carry the `1/B`
/// factor so that backward yields mean gradients.
pub fn mse_loss_batch(output: &DenseMatrix, target: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if output.shape() != target.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "mse_loss_batch",
            left: output.shape(),
            right: target.shape(),
        }
        .into());
    }
    let b = output.cols().max(1) as f64;
    let mut loss = 0.0;
    let mut error = DenseMatrix::zeros(output.rows(), output.cols());
    for ((e, o), t) in error.as_mut_slice().iter_mut().zip(output.as_slice()).zip(target.as_slice()) {
        loss += (t - o) * (t - o);
        *e = -2.0 * (t - o) / b;
    }
    Ok((loss / b, error))
}

fn log_softmax_into(logits: impl Iterator<Item = f64> + Clone, out: &mut Vec<f64>) {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.clone().map(|z| (z - max).exp()).sum::<f64>().ln();
    out.clear();
    out.extend(logits.map(|z| z - lse));
}

/// Softmax cross-entropy of `logits` against `class`, with error
/// `softmax(logits) − onehot(class)`.
pub fn cross_entropy(logits: &DenseVector, class: usize) -> Result<(f64, DenseVector)> {
    if class >= logits.len() {
        return Err(ModelError::ClassOutOfRange { class, classes: logits.len() });
    }
    let mut logp = Vec::with_capacity(logits.len());
    log_softmax_into(logits.0.iter().copied(), &mut logp);
    let loss = -logp[class];
    let mut error: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    error[class] -= 1.0;
    Ok((loss, DenseVector(error)))
}

/// Cross-entropy summed over the columns of `logits` (one sample each).
/// Errors are multiplied by `scale`; the returned loss is the plain sum.
pub fn cross_entropy_batch(logits: &DenseMatrix, classes: &[usize], scale: f64) -> Result<(f64, DenseMatrix)> {
    expect_len("class count", logits.cols(), classes.len())?;
    let (k, b) = logits.shape();
    let mut error = DenseMatrix::zeros(k, b);
    let mut loss = 0.0;
    let mut logp = Vec::with_capacity(k);
    for (j, &class) in classes.iter().enumerate() {
        if class >= k {
            return Err(ModelError::ClassOutOfRange { class, classes: k });
        }
        log_softmax_into((0..k).map(|i| logits[(i, j)]), &mut logp);
        loss -= logp[class];
        let e = error.as_mut_slice();
        for (i, lp) in logp.iter().enumerate() {
            let onehot = if i == class { 1.0 } else { 0.0 };
            e[i * b + j] = scale * (lp.exp() - onehot);
        }
    }
    Ok((loss, error))
}

/// Index of the largest entry in each column.
pub fn argmax_columns(m: &DenseMatrix) -> Vec<usize> {
    (0..m.cols()).map(|j| (0..m.rows()).max_by(|&a, &b| m[(a, j)].total_cmp(&m[(b, j)])).unwrap_or(0)).collect()
}
