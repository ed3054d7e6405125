use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over every non-channel axis.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`
/// using the biased batch variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T: Scalar = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Saved by a train-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T: Scalar> {
    normalized: Tensor<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNormCache<T> {
    /// `(x - mean) / sqrt(var + eps)` before scale and shift.
    pub fn normalized(&self) -> &Tensor<T> {
        &self.normalized
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrad<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        let c = *x.shape().last().unwrap_or(&0);
        if c != self.channels() {
            return Err(Error::InvalidInput(format!(
                "batchnorm has {} channels, input has {c}",
                self.channels()
            )));
        }
        Ok(c)
    }

    /// Normalizes with batch statistics and updates the running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let c = self.check(x)?;
        let m = (x.len() / c) as f64;
        let mut mean = vec![0.0f64; c];
        for px in x.data().chunks_exact(c) {
            for (acc, v) in mean.iter_mut().zip(px) {
                *acc += v.to_f64().unwrap_or(f64::NAN);
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0f64; c];
        for px in x.data().chunks_exact(c) {
            for ((acc, v), mu) in var.iter_mut().zip(px).zip(&mean) {
                let d = v.to_f64().unwrap_or(f64::NAN) - mu;
                *acc += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut normalized = x.zeros_like();
        let mut out = x.zeros_like();
        for ((src, nrm), dst) in x
            .data()
            .chunks_exact(c)
            .zip(normalized.data_mut().chunks_exact_mut(c))
            .zip(out.data_mut().chunks_exact_mut(c))
        {
            for ch in 0..c {
                let xhat = T::of((src[ch].to_f64().unwrap_or(f64::NAN) - mean[ch]) * inv_std[ch]);
                nrm[ch] = xhat;
                dst[ch] = self.gamma.data()[ch] * xhat + self.beta.data()[ch];
            }
        }

        let keep = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&mean) {
            *r = T::of(keep * r.to_f64().unwrap_or(0.0) + (1.0 - keep) * b);
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&var) {
            *r = T::of(keep * r.to_f64().unwrap_or(0.0) + (1.0 - keep) * b);
        }
        Ok((out, BatchNormCache { normalized, inv_std }))
    }

    /// Normalizes with running statistics only.
    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.check(x)?;
        let scale: Vec<T> = (0..c)
            .map(|ch| {
                let var = self.running_var.data()[ch].to_f64().unwrap_or(f64::NAN);
                self.gamma.data()[ch] * T::of(1.0 / (var + self.epsilon).sqrt())
            })
            .collect();
        let mut out = x.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for ch in 0..c {
                px[ch] = (px[ch] - self.running_mean.data()[ch]) * scale[ch] + self.beta.data()[ch];
            }
        }
        Ok(out)
    }

    pub fn backward(&self, cache: &BatchNormCache<T>, upstream: &Tensor<T>) -> Result<BatchNormGrad<T>> {
        let c = self.check(upstream)?;
        if upstream.shape() != cache.normalized.shape() {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm upstream {:?} does not match cached {:?}",
                upstream.shape(),
                cache.normalized.shape()
            )));
        }
        let m = (upstream.len() / c) as f64;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for (dy, xh) in upstream
            .data()
            .chunks_exact(c)
            .zip(cache.normalized.data().chunks_exact(c))
        {
            for ch in 0..c {
                let g = dy[ch].to_f64().unwrap_or(f64::NAN);
                dbeta[ch] += g;
                dgamma[ch] += g * xh[ch].to_f64().unwrap_or(f64::NAN);
            }
        }
        // dx = gamma * inv_std / m * (m*dy - sum(dy) - xhat * sum(dy*xhat))
        let mut dx = upstream.zeros_like();
        for ((dst, dy), xh) in dx
            .data_mut()
            .chunks_exact_mut(c)
            .zip(upstream.data().chunks_exact(c))
            .zip(cache.normalized.data().chunks_exact(c))
        {
            for ch in 0..c {
                let gamma = self.gamma.data()[ch].to_f64().unwrap_or(f64::NAN);
                let g = dy[ch].to_f64().unwrap_or(f64::NAN);
                let xhat = xh[ch].to_f64().unwrap_or(f64::NAN);
                let v = gamma * cache.inv_std[ch] / m * (m * g - dbeta[ch] - xhat * dgamma[ch]);
                dst[ch] = T::of(v);
            }
        }
        Ok(BatchNormGrad {
            input: dx,
            gamma: Tensor::from_vec(&[c], dgamma.into_iter().map(T::of).collect())?,
            beta: Tensor::from_vec(&[c], dbeta.into_iter().map(T::of).collect())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let mut bn = BatchNorm::<f32>::new(2).unwrap();
        let x = Tensor::from_vec(&[2, 2, 2], vec![3., -1., 3., -1., 3., -1., 3., -1.]).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn four_values_standardize() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        bn.epsilon = 1e-15;
        let x = Tensor::from_vec(&[2, 2, 1], vec![1., 2., 3., 4.]).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        let want = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        // running stats moved 10% toward mean 2.5, var 1.25
        assert!((bn.running_mean.data()[0] - 0.25).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.125)).abs() < 1e-12);
    }

    #[test]
    fn infer_mode_with_identity_statistics() {
        let bn = BatchNorm::<f64>::new(3).unwrap();
        let x = Tensor::<f64>::he_normal(&[4, 4, 3], 1, &mut Rng::new(1)).unwrap();
        let y = bn.forward_infer(&x).unwrap();
        let factor = 1.0 / (1.0 + DEFAULT_EPSILON).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn train_output_is_standardized() {
        let mut bn = BatchNorm::<f64>::new(4).unwrap();
        let mut rng = Rng::new(9);
        let x = Tensor::<f64>::he_normal(&[3, 5, 5, 4], 1, &mut rng).unwrap().map(|v| 3.0 * v + 7.0);
        let (_, cache) = bn.forward_train(&x).unwrap();
        let xh = cache.normalized();
        for ch in 0..4 {
            let vals: Vec<f64> = xh.data().iter().skip(ch).step_by(4).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let mut bn = BatchNorm::<f32>::new(2).unwrap();
        let x = Tensor::zeros(&[2, 2, 3]).unwrap();
        assert!(bn.forward_train(&x).is_err());
        assert!(bn.forward_infer(&x).is_err());
    }
}
