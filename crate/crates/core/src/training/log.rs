use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::write_text;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_dice: f64,
    pub val_loss: f64,
    pub val_dice: f64,
}

/// Per-epoch training history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    records: Vec<EpochRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,train_loss,train_dice,val_loss,val_dice";

impl TrainLog {
    /// Appends a record; epochs must increase strictly starting from 1.
    pub fn push(&mut self, r: EpochRecord) -> Result<()> {
        let next = self.records.last().map_or(1, |p| p.epoch + 1);
        if r.epoch != next {
            return Err(Error::InvalidInput(format!("expected epoch {next}, got {}", r.epoch)));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRAIN_LOG_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch,
                sig(r.train_loss),
                sig(r.train_dice),
                sig(r.val_loss),
                sig(r.val_dice)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

/// Fixed-point rendering with ten significant digits.
fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.9}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).clamp(0, 30) as usize;
    format!("{x:.decimals$}")
}
