use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Relu => x.map(|v| v.max(T::zero())),
            Activation::Sigmoid => x.map(sigmoid),
        }
    }

    /// `output` is the value returned by [`Activation::forward`]; both
    /// derivatives are expressible through it.
    pub fn backward<T: Scalar>(self, output: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
        let mut grad = upstream.clone();
        match self {
            Activation::Relu => {
                for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                    if y <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                    *g *= y * (T::one() - y);
                }
            }
        }
        grad
    }
}
