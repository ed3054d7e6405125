//! Encoder-decoder fully convolutional networks for heart MRI segmentation.
//!
//! The crate covers the whole workflow: volume I/O and 2.5D slice stacking
//! ([`data`]), the layer library with hand-written backward passes
//! ([`layers`]), the parameterized model family ([`network`]), loss, Adam and
//! the epoch loop ([`training`]), the six overlap metrics ([`metrics`]) and the
//! end-to-end commands used by the CLI ([`pipeline`]).

pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use layers::Mode;
pub use network::{build_model, Model, ModelConfig};
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
