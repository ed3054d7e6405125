//! The encoder-decoder model family and its building blocks.

mod blocks;
mod checkpoint;
mod config;
mod model;
mod params;

pub use blocks::{ConvStage, Mod1, Mod1Cache, Mod2, Mod2Cache, KERNEL};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::ModelConfig;
pub use model::{build_model, Model, ModelGrad};
pub use params::{Gradients, Slot};
