use super::{shape_mismatch, Tensor};
use crate::error::Result;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_parts(x.shape(), data)
}

/// Passes `upstream` where `x > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if x.shape() != upstream.shape() {
        return Err(shape_mismatch("relu_backward", x.shape(), upstream.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(x.shape(), data))
}

/// Mean squared error over every element, with its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(shape_mismatch("mse_loss", pred.shape(), target.shape()));
    }
    let count = pred.data().len() as f64;
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(pred.data().len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = f64::from(p) - f64::from(t);
        sum += d * d;
        grad.push((2.0 * d / count) as f32);
    }
    Ok((sum / count, Tensor::from_parts(pred.shape(), grad)))
}
