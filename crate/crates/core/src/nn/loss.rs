use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Predictions are clamped into `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-12;

/// Binary cross-entropy summed over outputs and averaged over the batch,
/// with its gradient with respect to the predictions.
pub fn bce_loss(predictions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if predictions.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            context: "bce targets",
            expected: predictions.len(),
            actual: targets.len(),
        });
    }
    let batch = predictions.nrows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(predictions.dim());
    Zip::from(&mut grad)
        .and(predictions)
        .and(targets)
        .for_each(|g, &q, &t| {
            let q = q.clamp(CLAMP, 1.0 - CLAMP);
            loss -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
            *g = (-t / q + (1.0 - t) / (1.0 - q)) / batch;
        });
    Ok((loss / batch, grad))
}

/// Half squared error, averaged over the batch.
pub fn half_squared_loss(predictions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if predictions.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            context: "squared-error targets",
            expected: predictions.len(),
            actual: targets.len(),
        });
    }
    let batch = predictions.nrows().max(1) as f64;
    let diff = &predictions - &targets;
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / batch;
    Ok((loss, diff / batch))
}
