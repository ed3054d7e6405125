//! Stride-1, zero same-padded 2D cross-correlation.
//!
//! Each kernel offset `(ky, kx)` contributes one GEMM between a shifted view of
//! the padded input and the `[C_in, K]` weight slice for that offset. The view
//! is taken over the padded row width, so it is a single contiguous matrix; the
//! `k - 1` extra columns it produces per row are discarded afterwards.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T: Scalar = f32> {
    /// `[k, k, C_in, K]`
    pub weight: Tensor<T>,
    /// `[K]`
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct ConvGrad<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-initialized weights, zero bias.
    pub fn new(kernel: usize, in_channels: usize, filters: usize, rng: &mut Rng) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::InvalidConfig(format!("kernel size {kernel} must be odd")));
        }
        let fan_in = kernel * kernel * in_channels;
        Ok(Self {
            weight: Tensor::he_normal(&[kernel, kernel, in_channels, filters], fan_in, rng)?,
            bias: Tensor::zeros(&[filters])?,
        })
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        match *weight.shape() {
            [k, k2, _, f] if k == k2 && k % 2 == 1 && bias.shape() == [f] => Ok(Self { weight, bias }),
            _ => Err(Error::ShapeMismatch(format!(
                "conv weight {:?} / bias {:?} must be [k,k,C_in,K] with odd k and [K]",
                weight.shape(),
                bias.shape()
            ))),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn filters(&self) -> usize {
        self.weight.shape()[3]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let dims = x.nhwc()?;
        if dims.3 != self.in_channels() {
            return Err(Error::InvalidInput(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                dims.3
            )));
        }
        Ok(dims)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w, cin) = self.check_input(x)?;
        let (k, f) = (self.kernel(), self.filters());
        let pad = k / 2;
        let padded = x.pad2d(pad, T::zero())?;
        let pw = w + 2 * pad;
        let sample_in = (h + 2 * pad) * pw * cin;
        let mut out = vec![T::zero(); n * h * w * f];
        let weight = self.weight.data();
        let bias = self.bias.data();

        out.par_chunks_mut(h * w * f)
            .zip(padded.data().par_chunks(sample_in))
            .for_each(|(out, src)| {
                let rows = (h - 1) * pw + w;
                let mut full = vec![T::zero(); rows * f];
                for ky in 0..k {
                    for kx in 0..k {
                        let a = &src[(ky * pw + kx) * cin..];
                        let b = &weight[(ky * k + kx) * cin * f..];
                        T::gemm(rows, cin, f, T::one(), a, (cin, 1), b, (f, 1), T::one(), &mut full, (f, 1));
                    }
                }
                for y in 0..h {
                    for x in 0..w {
                        let src = &full[(y * pw + x) * f..][..f];
                        let dst = &mut out[(y * w + x) * f..][..f];
                        for ((o, &s), &b) in dst.iter_mut().zip(src).zip(bias) {
                            *o = s + b;
                        }
                    }
                }
            });

        Tensor::from_vec(&x.spatial_shape(h, w, f), out)
    }

    /// Gradients of a scalar objective given `upstream = dL/d(output)`.
    pub fn backward(&self, x: &Tensor<T>, upstream: &Tensor<T>) -> Result<ConvGrad<T>> {
        let (n, h, w, cin) = self.check_input(x)?;
        let (k, f) = (self.kernel(), self.filters());
        if upstream.nhwc()? != (n, h, w, f) {
            return Err(Error::ShapeMismatch(format!(
                "conv upstream gradient {:?} does not match output of {:?}",
                upstream.shape(),
                x.shape()
            )));
        }
        let pad = k / 2;
        let padded = x.pad2d(pad, T::zero())?;
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let sample_in = ph * pw * cin;
        let weight = self.weight.data();
        let rows = (h - 1) * pw + w;

        let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = padded
            .data()
            .par_chunks(sample_in)
            .zip(upstream.data().par_chunks(h * w * f))
            .map(|(src, dy)| {
                // Upstream laid out on the padded row width; the extra columns stay zero.
                let mut dy_full = vec![T::zero(); rows * f];
                let mut db = vec![T::zero(); f];
                for y in 0..h {
                    for x in 0..w {
                        let g = &dy[(y * w + x) * f..][..f];
                        dy_full[(y * pw + x) * f..][..f].copy_from_slice(g);
                        for (acc, &v) in db.iter_mut().zip(g) {
                            *acc += v;
                        }
                    }
                }
                let mut dpad = vec![T::zero(); ph * pw * cin];
                let mut dw = vec![T::zero(); k * k * cin * f];
                for ky in 0..k {
                    for kx in 0..k {
                        let off = (ky * pw + kx) * cin;
                        let w_off = (ky * k + kx) * cin * f;
                        // d(input view) += dy · W_offᵀ
                        T::gemm(
                            rows, f, cin, T::one(),
                            &dy_full, (f, 1),
                            &weight[w_off..], (1, f),
                            T::one(),
                            &mut dpad[off..], (cin, 1),
                        );
                        // dW_off += (input view)ᵀ · dy
                        T::gemm(
                            cin, rows, f, T::one(),
                            &src[off..], (1, cin),
                            &dy_full, (f, 1),
                            T::one(),
                            &mut dw[w_off..], (f, 1),
                        );
                    }
                }
                let mut dx = Vec::with_capacity(h * w * cin);
                for y in 0..h {
                    let start = ((y + pad) * pw + pad) * cin;
                    dx.extend_from_slice(&dpad[start..start + w * cin]);
                }
                (dx, dw, db)
            })
            .collect();

        // Fixed-order reduction over the batch keeps results independent of scheduling.
        let mut dx = Vec::with_capacity(n * h * w * cin);
        let mut dw = vec![T::zero(); weight.len()];
        let mut db = vec![T::zero(); f];
        for (pdx, pdw, pdb) in partials {
            dx.extend_from_slice(&pdx);
            for (a, b) in dw.iter_mut().zip(pdw) {
                *a += b;
            }
            for (a, b) in db.iter_mut().zip(pdb) {
                *a += b;
            }
        }
        Ok(ConvGrad {
            input: Tensor::from_vec(x.shape(), dx)?,
            weight: Tensor::from_vec(self.weight.shape(), dw)?,
            bias: Tensor::from_vec(&[f], db)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop cross-correlation with zero padding.
    fn naive(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let (n, h, w, cin) = x.nhwc().unwrap();
        let (k, f) = (conv.kernel(), conv.filters());
        let p = (k / 2) as isize;
        let mut out = Tensor::<f64>::zeros(&[n, h, w, f]).unwrap();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    for o in 0..f {
                        let mut acc = conv.bias.data()[o];
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - p;
                                let sx = xx as isize + kx as isize - p;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                for c in 0..cin {
                                    let xi = ((b * h + sy as usize) * w + sx as usize) * cin + c;
                                    let wi = ((ky * k + kx) * cin + c) * f + o;
                                    acc += x.data()[xi] * conv.weight.data()[wi];
                                }
                            }
                        }
                        out.set(&[b, y, xx, o], acc).unwrap();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_copies_input() {
        let conv = Conv2d::from_parts(
            Tensor::<f32>::full(&[1, 1, 1, 1], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[2, 3, 1], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_on_three_by_three() {
        let conv = Conv2d::from_parts(
            Tensor::<f64>::full(&[3, 3, 1, 1], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[3, 3, 1], (1..=9).map(f64::from).collect()).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.get(&[1, 1, 0]).unwrap(), 45.0);
        assert_eq!(y.get(&[0, 0, 0]).unwrap(), 12.0);
        assert_eq!(y.data(), naive(&x, &conv).data());
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = Rng::new(3);
        for &(n, h, w, cin, f, k) in &[(2, 5, 7, 3, 4, 3), (1, 4, 4, 2, 1, 5), (3, 1, 6, 1, 2, 3)] {
            let mut conv = Conv2d::<f64>::new(k, cin, f, &mut rng).unwrap();
            conv.bias = Tensor::he_normal(&[f], 1, &mut rng).unwrap();
            let x = Tensor::<f64>::he_normal(&[n, h, w, cin], 1, &mut rng).unwrap();
            let y = conv.forward(&x).unwrap();
            let want = naive(&x, &conv);
            for (a, b) in y.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_shape_and_zero_input() {
        let mut rng = Rng::new(0);
        let mut conv = Conv2d::<f32>::new(3, 3, 16, &mut rng).unwrap();
        conv.bias = Tensor::from_vec(&[16], (0..16).map(|i| i as f32).collect()).unwrap();
        let y = conv.forward(&Tensor::zeros(&[6, 5, 3]).unwrap()).unwrap();
        assert_eq!(y.shape(), &[6, 5, 16]);
        for px in y.data().chunks(16) {
            assert_eq!(px, conv.bias.data());
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let conv = Conv2d::<f32>::new(3, 2, 4, &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(&[4, 4, 3]).unwrap();
        assert!(matches!(conv.forward(&x), Err(Error::InvalidInput(_))));
        assert!(Conv2d::<f32>::new(2, 1, 1, &mut Rng::new(0)).is_err());
    }
}
