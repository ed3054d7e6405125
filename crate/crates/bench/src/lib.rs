//! Fixtures shared by the benchmarks.

use cardioseg::{build_model, Model, ModelConfig, Rng, Tensor};

/// Seeded input batch `[n, side, side, ch]`.
pub fn input(n: usize, side: usize, ch: usize) -> Tensor<f32> {
    Tensor::he_normal(&[n, side, side, ch], 1, &mut Rng::new(1)).expect("valid shape")
}

pub fn model(nf: usize, ch: usize, depth: usize) -> Model {
    let cfg = ModelConfig {
        nf,
        ch,
        depth,
        ..Default::default()
    };
    build_model(&cfg, &mut Rng::new(0)).expect("valid config")
}
