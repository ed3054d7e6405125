//! Categorical cross entropy over the two sigmoid class channels.
//!
//! Each pixel is one sample. Its class scores are clamped into
//! `[CLAMP, 1 - CLAMP]`, normalized to sum to one over the class axis, and
//! scored with `-Σ_r y_r ln p_r`; the loss is the mean over all pixels of the
//! batch. The normalization matches how categorical cross entropy treats
//! non-logit outputs; without it a prediction of 1 on every channel would
//! reach zero loss regardless of the target.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const CLAMP: f64 = 1e-7;

/// Returns the mean loss and `dL/d(prediction)`.
pub fn cross_entropy_loss<T: Scalar>(target: &Tensor<T>, prediction: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if target.shape() != prediction.shape() {
        return Err(Error::ShapeMismatch(format!(
            "target {:?} vs prediction {:?}",
            target.shape(),
            prediction.shape()
        )));
    }
    let classes = *target.shape().last().unwrap_or(&0);
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two class channels, got shape {:?}",
            target.shape()
        )));
    }
    let pixels = target.len() / classes;
    let scale = 1.0 / pixels as f64;
    let mut total = 0.0;
    let mut grad = prediction.zeros_like();
    let mut clamped = vec![0.0f64; classes];
    for ((y, yh), g) in target
        .data()
        .chunks_exact(classes)
        .zip(prediction.data().chunks_exact(classes))
        .zip(grad.data_mut().chunks_exact_mut(classes))
    {
        let mut ones = 0;
        for &v in y {
            if v == T::one() {
                ones += 1;
            } else if v != T::zero() {
                return Err(Error::InvalidInput(format!("target value {v:?} is not one-hot")));
            }
        }
        if ones != 1 {
            return Err(Error::InvalidInput("target pixel is not one-hot".into()));
        }
        for (c, &v) in clamped.iter_mut().zip(yh) {
            *c = v.to_f64().unwrap_or(f64::NAN).clamp(CLAMP, 1.0 - CLAMP);
        }
        let sum: f64 = clamped.iter().sum();
        for r in 0..classes {
            let yr = y[r].to_f64().unwrap_or(0.0);
            if yr != 0.0 {
                total -= yr * (clamped[r] / sum).ln();
            }
            let raw = yh[r].to_f64().unwrap_or(f64::NAN);
            if (CLAMP..=1.0 - CLAMP).contains(&raw) {
                // d/dc_r of -Σ y ln(c / S) = -y_r / c_r + Σy / S, with Σy = 1
                g[r] = T::of(scale * (1.0 / sum - yr / clamped[r]));
            }
        }
    }
    Ok((total * scale, grad))
}

/// Expands a `{0,1}` mask of shape `[..]` into a one-hot `[.., 2]` target.
pub fn one_hot<T: Scalar>(mask: &Tensor<T>) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(mask.len() * 2);
    for &v in mask.data() {
        if v == T::one() {
            data.extend([T::zero(), T::one()]);
        } else if v == T::zero() {
            data.extend([T::one(), T::zero()]);
        } else {
            return Err(Error::InvalidInput(format!("mask value {v:?} is not 0 or 1")));
        }
    }
    let mut shape = mask.shape().to_vec();
    shape.push(2);
    Tensor::from_vec(&shape, data)
}
