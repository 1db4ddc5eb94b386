use super::Tensor;
use crate::error::{Error, Result};

fn check(pred: &Tensor, target: &Tensor) -> Result<usize> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("loss: {:?} vs {:?}", pred.shape(), target.shape())));
    }
    Ok(if pred.rank() >= 2 { pred.shape()[0] } else { 1 })
}

/// Squared error summed over the profile and averaged over the batch:
/// `Σᵢ Σₜ (predᵢₜ − targetᵢₜ)² / N`. Returns the value and `∂/∂pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let n = check(pred, target)? as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, Tensor::from_raw(pred.shape().to_vec(), grad)))
}

/// Mean absolute error over every element, with the sign subgradient.
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    check(pred, target)?;
    let m = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / m
            } else if d < 0.0 {
                -1.0 / m
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / m, Tensor::from_raw(pred.shape().to_vec(), grad)))
}
