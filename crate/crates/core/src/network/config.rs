use crate::error::{Error, Result};
use crate::layers::DEFAULT_DROPOUT_RATE;

/// Architecture knobs that fully determine a network instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Base filter count; encoder level `l` uses `nf * 2^l` filters.
    pub nf: usize,
    /// Input channels: the center slice plus `(ch - 1) / 2` neighbours on each side.
    pub ch: usize,
    /// Number of pooling levels.
    pub depth: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            nf: 16,
            ch: 1,
            depth: 4,
            dropout_rate: DEFAULT_DROPOUT_RATE,
            num_classes: 2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Thin 2.5D variant: 16 base filters, `ch` stacked slices.
    pub fn thin(ch: usize) -> Self {
        Self {
            nf: 16,
            ch,
            ..Self::default()
        }
    }

    /// Thick single-slice variant: 64 base filters.
    pub fn thick() -> Self {
        Self {
            nf: 64,
            ch: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nf == 0 {
            return Err(Error::InvalidConfig("nf must be at least 1".into()));
        }
        if self.ch == 0 || self.ch % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "ch must be a positive odd number, got {}",
                self.ch
            )));
        }
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::InvalidConfig(format!("depth {} out of range 1..=16", self.depth)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        if self.num_classes != 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be 2 (background, foreground), got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn filters_at(&self, level: usize) -> usize {
        self.nf << level
    }

    /// Spatial dims must survive `depth` halvings.
    pub fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.depth;
        if h % f != 0 || w % f != 0 {
            return Err(Error::InvalidInput(format!(
                "spatial dims {h}x{w} must be divisible by 2^{} = {f}",
                self.depth
            )));
        }
        Ok(())
    }
}
