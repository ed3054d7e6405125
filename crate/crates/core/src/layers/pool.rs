//! 2×2 max pooling and its nearest-neighbour ×2 inverse.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Flat input offsets of each pooled maximum, recorded for the backward pass.
#[derive(Clone, Debug)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (n, h, w, c) = x.nhwc()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "max pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let at = |dy: usize, dx: usize| ((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                    // Ties go to the first window element in row-major order.
                    let mut best = at(0, 0);
                    for i in [at(0, 1), at(1, 0), at(1, 1)] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&x.spatial_shape(oh, ow, c), out)?,
        PoolIndices {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2d_backward<T: Scalar>(indices: &PoolIndices, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.len() != indices.argmax.len() {
        return Err(Error::ShapeMismatch(format!(
            "pool upstream {:?} does not match the pooled output",
            upstream.shape()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape)?;
    let g = grad.data_mut();
    for (&i, &v) in indices.argmax.iter().zip(upstream.data()) {
        g[i] += v;
    }
    Ok(grad)
}

pub fn upsample2d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w, c) = x.nhwc()?;
    let (oh, ow) = (2 * h, 2 * w);
    let src = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for y in 0..oh {
            let row = &src[(b * h + y / 2) * w * c..][..w * c];
            for px in row.chunks_exact(c) {
                out.extend_from_slice(px);
                out.extend_from_slice(px);
            }
        }
    }
    Tensor::from_vec(&x.spatial_shape(oh, ow, c), out)
}

/// Sums the upstream gradient over each replicated 2×2 block.
pub fn upsample2d_backward<T: Scalar>(upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w, c) = upstream.nhwc()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "upsample gradient needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut grad = Tensor::zeros(&upstream.spatial_shape(oh, ow, c))?;
    let g = grad.data_mut();
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let src = &upstream.data()[((b * h + y) * w + xx) * c..][..c];
                let dst = &mut g[((b * oh + y / 2) * ow + xx / 2) * c..][..c];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
    Ok(grad)
}
