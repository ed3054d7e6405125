//! Forward and backward passes for every layer type in the network.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod pool;

pub use activation::Activation;
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormGrad, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use conv::{Conv2d, ConvGrad};
pub use dropout::{Dropout, DropoutMask, DEFAULT_RATE as DEFAULT_DROPOUT_RATE};
pub use pool::{maxpool2d, maxpool2d_backward, upsample2d, upsample2d_backward, PoolIndices};

/// Whether a pass uses batch statistics and dropout (`Train`) or running
/// statistics and identity dropout (`Infer`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
