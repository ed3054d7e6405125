//! Dense row-major tensors and the primitive manipulations layers are built on.
//!
//! Spatial tensors use channels-last layout: `[H, W, C]` for a single image and
//! `[N, H, W, C]` for a batch. The last axis is always the fastest varying.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Element type of a [`Tensor`].
///
/// Training runs in `f32`; gradient checks run the same code in `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Size in bytes of the little-endian encoding.
    const BYTES: usize;

    fn of(v: f64) -> Self;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// `c = alpha * a·b + beta * c` on strided row-major views.
    ///
    /// `a` is `m×k`, `b` is `k×n`, `c` is `m×n`; each slice starts at the
    /// matrix origin and strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );
}

fn span(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_scalar {
    ($t:ty, $bytes:expr, $gemm:path) => {
        impl Scalar for $t {
            const BYTES: usize = $bytes;

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; $bytes];
                buf.copy_from_slice(&bytes[..$bytes]);
                <$t>::from_le_bytes(buf)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                assert!(span(m, k, a_strides) <= a.len(), "gemm: lhs out of bounds");
                assert!(span(k, n, b_strides) <= b.len(), "gemm: rhs out of bounds");
                assert!(span(m, n, c_strides) <= c.len(), "gemm: output out of bounds");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above keep every strided access inside the slices,
                // and `c` is borrowed mutably so it cannot alias `a` or `b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, 4, matrixmultiply::sgemm);
impl_scalar!(f64, 8, matrixmultiply::dgemm);

/// N-dimensional array with an explicit shape, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Allocates a tensor with every element set to `fill`.
    pub fn full(shape: &[usize], fill: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    /// He-normal initialization: zero mean, standard deviation `sqrt(2 / fan_in)`.
    pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<Self> {
        if fan_in == 0 {
            return Err(Error::InvalidInput("fan_in must be at least 1".into()));
        }
        let len = check_shape(shape)?;
        let std = (2.0 / fan_in as f64).sqrt();
        let data = (0..len).map(|_| T::of(rng.normal() * std)).collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Same-shape tensor filled with zeros. Infallible since `self` is valid.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::InvalidInput(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    /// Inverse of [`Tensor::offset`].
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.shape.len()];
        for (slot, &d) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % d;
            flat /= d;
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let i = self.offset(index)?;
        self.data[i] = value;
        Ok(())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::of(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    /// Interprets a rank-3 `[H,W,C]` or rank-4 `[N,H,W,C]` tensor as NHWC.
    pub fn nhwc(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w, c] => Ok((1, h, w, c)),
            [n, h, w, c] => Ok((n, h, w, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected [H,W,C] or [N,H,W,C], got {:?}",
                self.shape
            ))),
        }
    }

    /// Shape with the spatial axes replaced, preserving rank-3 vs rank-4.
    pub(crate) fn spatial_shape(&self, h: usize, w: usize, c: usize) -> Vec<usize> {
        if self.shape.len() == 3 {
            vec![h, w, c]
        } else {
            vec![self.shape[0], h, w, c]
        }
    }

    /// Surrounds every image with a `pad`-wide border of `value`.
    pub fn pad2d(&self, pad: usize, value: T) -> Result<Self> {
        let (n, h, w, c) = self.nhwc()?;
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let mut out = vec![value; n * ph * pw * c];
        for b in 0..n {
            for y in 0..h {
                let src = ((b * h + y) * w) * c;
                let dst = ((b * ph + y + pad) * pw + pad) * c;
                out[dst..dst + w * c].copy_from_slice(&self.data[src..src + w * c]);
            }
        }
        Ok(Self {
            shape: self.spatial_shape(ph, pw, c),
            data: out,
        })
    }

    /// Removes a `crop`-wide border from every image.
    pub fn crop2d(&self, crop: usize) -> Result<Self> {
        let (n, h, w, c) = self.nhwc()?;
        if h <= 2 * crop || w <= 2 * crop {
            return Err(Error::ShapeMismatch(format!(
                "cannot crop {crop} from spatial dims {h}x{w}"
            )));
        }
        let (oh, ow) = (h - 2 * crop, w - 2 * crop);
        let mut out = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for y in 0..oh {
                let src = ((b * h + y + crop) * w + crop) * c;
                out.extend_from_slice(&self.data[src..src + ow * c]);
            }
        }
        Ok(Self {
            shape: self.spatial_shape(oh, ow, c),
            data: out,
        })
    }

    /// Channel-wise concatenation: channels of `self` precede those of `other`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        let (n, h, w, c1) = self.nhwc()?;
        let (n2, h2, w2, c2) = other.nhwc()?;
        if (n, h, w) != (n2, h2, w2) || self.rank() != other.rank() {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        let c = c1 + c2;
        let mut out = Vec::with_capacity(n * h * w * c);
        for (a, b) in self.data.chunks_exact(c1).zip(other.data.chunks_exact(c2)) {
            out.extend_from_slice(a);
            out.extend_from_slice(b);
        }
        Ok(Self {
            shape: self.spatial_shape(h, w, c),
            data: out,
        })
    }

    /// Splits channels at `at`, the inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, at: usize) -> Result<(Self, Self)> {
        let (_, h, w, c) = self.nhwc()?;
        if at == 0 || at >= c {
            return Err(Error::InvalidInput(format!(
                "split point {at} must lie strictly inside 0..{c}"
            )));
        }
        let mut left = Vec::with_capacity(self.len() / c * at);
        let mut right = Vec::with_capacity(self.len() / c * (c - at));
        for px in self.data.chunks_exact(c) {
            left.extend_from_slice(&px[..at]);
            right.extend_from_slice(&px[at..]);
        }
        Ok((
            Self {
                shape: self.spatial_shape(h, w, at),
                data: left,
            },
            Self {
                shape: self.spatial_shape(h, w, c - at),
                data: right,
            },
        ))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Self]) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyDataset)?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::ShapeMismatch(format!(
                    "cannot stack {:?} with {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// The `i`-th entry along the leading axis.
    pub fn index_axis0(&self, i: usize) -> Result<Self> {
        if self.rank() < 2 || i >= self.shape[0] {
            return Err(Error::InvalidInput(format!(
                "cannot take entry {i} of {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).sum()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}
