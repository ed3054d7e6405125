use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Adam with bias correction:
///
/// ```text
/// m ← β1·m + (1-β1)·g        v ← β2·v + (1-β2)·g²
/// θ ← θ - α · m̂ / (√v̂ + ε)   m̂ = m / (1-β1^t),  v̂ = v / (1-β2^t)
/// ```
#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar = f32> {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for AdamState<T> {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl<T: Scalar> AdamState<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first, &self.second)
    }

    /// Applies one update. Moment buffers are allocated on the first call.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| p.zeros_like()).collect();
            self.second = params.iter().map(|p| p.zeros_like()).collect();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(Error::ShapeMismatch("optimizer state does not match parameters".into()));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = gi.to_f64().unwrap_or(f64::NAN);
                let mn = b1 * mi.to_f64().unwrap_or(0.0) + (1.0 - b1) * g;
                let vn = b2 * vi.to_f64().unwrap_or(0.0) + (1.0 - b2) * g * g;
                *mi = T::of(mn);
                *vi = T::of(vn);
                let update = self.learning_rate * (mn / c1) / ((vn / c2).sqrt() + self.epsilon);
                *pi = T::of(pi.to_f64().unwrap_or(f64::NAN) - update);
            }
        }
        Ok(())
    }
}
