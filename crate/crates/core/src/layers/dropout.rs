use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_RATE: f64 = 0.5;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during training so
/// inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    rng: Rng,
}

/// Per-element multiplier applied in the forward pass (`0` or `1 / (1 - rate)`).
#[derive(Clone, Debug)]
pub struct DropoutMask<T: Scalar>(Tensor<T>);

impl<T: Scalar> DropoutMask<T> {
    pub fn new(scale: Tensor<T>) -> Self {
        Self(scale)
    }

    pub fn scale(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn backward(&self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        apply(&self.0, upstream)
    }
}

fn apply<T: Scalar>(mask: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.shape() != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "dropout mask {:?} does not match {:?}",
            mask.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for (o, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    Ok(out)
}

impl Dropout {
    pub fn new(rate: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} must lie in [0, 1)")));
        }
        Ok(Self { rate, rng })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward_train<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, DropoutMask<T>)> {
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mut mask = x.zeros_like();
        for m in mask.data_mut() {
            // Always draw so the stream position does not depend on the rate.
            let u = self.rng.uniform();
            *m = if u < self.rate { T::zero() } else { keep };
        }
        let out = apply(&mask, x)?;
        Ok((out, DropoutMask(mask)))
    }

    pub fn forward_infer<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        x.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_and_infer_are_identity() {
        let x = Tensor::<f32>::he_normal(&[4, 4, 3], 1, &mut Rng::new(0)).unwrap();
        let mut d = Dropout::new(0.0, Rng::new(1)).unwrap();
        assert_eq!(d.forward_train(&x).unwrap().0, x);
        let d = Dropout::new(0.7, Rng::new(1)).unwrap();
        assert_eq!(d.forward_infer(&x), x);
    }

    #[test]
    fn inverted_dropout_preserves_the_mean() {
        let x = Tensor::<f64>::full(&[100_000], 1.0).unwrap();
        let mut d = Dropout::new(0.5, Rng::new(17)).unwrap();
        let (y, mask) = d.forward_train(&x).unwrap();
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let g = mask.backward(&x).unwrap();
        assert_eq!(g, y);
    }

    #[test]
    fn rate_must_be_below_one() {
        assert!(Dropout::new(1.0, Rng::new(0)).is_err());
        assert!(Dropout::new(-0.1, Rng::new(0)).is_err());
    }
}
