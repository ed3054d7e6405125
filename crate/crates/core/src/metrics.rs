//! Pixel-level overlap metrics between predicted and ground-truth masks.
//!
//! Zero-denominator conventions:
//! - prediction and ground truth both empty (`tp + fp + fn == 0`): perfect
//!   agreement, so recall, precision, Dice and Jaccard are 1 and fallout is 0;
//! - otherwise any ratio whose denominator is zero is 0.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Argmax over the two class channels; ties go to foreground.
pub fn binarize<T: Scalar>(scores: &Tensor<T>) -> Result<Tensor<T>> {
    let c = *scores.shape().last().unwrap_or(&0);
    if c != 2 || scores.rank() < 2 {
        return Err(Error::InvalidInput(format!(
            "binarize needs two class channels, got shape {:?}",
            scores.shape()
        )));
    }
    let mask = scores
        .data()
        .chunks_exact(2)
        .map(|px| if px[1] >= px[0] { T::one() } else { T::zero() })
        .collect();
    Tensor::from_vec(&scores.shape()[..scores.rank() - 1], mask)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Per-pixel tally of two equally shaped binary masks.
pub fn confusion_counts<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<ConfusionCounts> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let bit = |v: T| -> Result<bool> {
        if v == T::zero() {
            Ok(false)
        } else if v == T::one() {
            Ok(true)
        } else {
            Err(Error::InvalidInput(format!("mask value {v:?} is not 0 or 1")))
        }
    };
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (bit(p)?, bit(g)?) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// The six reported metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricVector {
    /// Recall / sensitivity.
    pub tpr: f64,
    /// Fallout, 1 - specificity.
    pub fpr: f64,
    /// Precision.
    pub ppv: f64,
    pub dice: f64,
    pub jaccard: f64,
    /// Informedness, `tpr - fpr`.
    pub youden: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricVector {
    if c.tp + c.fp + c.fn_ == 0 {
        return MetricVector {
            tpr: 1.0,
            fpr: 0.0,
            ppv: 1.0,
            dice: 1.0,
            jaccard: 1.0,
            youden: 1.0,
        };
    }
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let fpr = ratio(c.fp, c.fp + c.tn);
    MetricVector {
        tpr,
        fpr,
        ppv: ratio(c.tp, c.tp + c.fp),
        dice: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        jaccard: ratio(c.tp, c.tp + c.fp + c.fn_),
        youden: tpr - fpr,
    }
}

/// Rows of the report, in display order.
pub const METRIC_NAMES: [&str; 6] = [
    "Recall",
    "Fallout",
    "Precision",
    "Dice score",
    "Jaccard index",
    "Youden's index",
];

impl MetricVector {
    pub fn values(&self) -> [f64; 6] {
        [self.tpr, self.fpr, self.ppv, self.dice, self.jaccard, self.youden]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`, 0 for a single value).
    pub std: f64,
}

/// Mean ± std of every metric over a set of slices.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateReport {
    pub stats: [Stat; 6],
    pub count: usize,
}

pub fn aggregate_stats(vectors: &[MetricVector]) -> Result<AggregateReport> {
    if vectors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = vectors.len() as f64;
    let stats = std::array::from_fn(|i| {
        let mean = vectors.iter().map(|v| v.values()[i]).sum::<f64>() / n;
        let std = if vectors.len() > 1 {
            let ss: f64 = vectors.iter().map(|v| (v.values()[i] - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    });
    Ok(AggregateReport {
        stats,
        count: vectors.len(),
    })
}

impl AggregateReport {
    pub fn get(&self, name: &str) -> Option<Stat> {
        METRIC_NAMES.iter().position(|n| *n == name).map(|i| self.stats[i])
    }

    pub fn dice(&self) -> Stat {
        self.stats[3]
    }

    /// `metric,mean,std,n` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,mean,std,n\n");
        for (name, st) in METRIC_NAMES.iter().zip(&self.stats) {
            s.push_str(&format!("{name},{:.10},{:.10},{}\n", st.mean, st.std, self.count));
        }
        s
    }
}

impl fmt::Display for AggregateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Performance metrics (n = {})", self.count)?;
        for (name, st) in METRIC_NAMES.iter().zip(&self.stats) {
            writeln!(f, "{name}  {:.4} ± {:.4}", st.mean, st.std)?;
        }
        Ok(())
    }
}

/// One evaluated slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceMetrics {
    pub volume_id: String,
    pub slice_index: usize,
    pub metrics: MetricVector,
}

pub fn per_slice_csv(rows: &[SliceMetrics]) -> String {
    let mut s = String::from("volume_id,slice_index,tpr,fpr,ppv,dice,jaccard,youden\n");
    for r in rows {
        let m = &r.metrics;
        s.push_str(&format!(
            "{},{},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10}\n",
            r.volume_id, r.slice_index, m.tpr, m.fpr, m.ppv, m.dice, m.jaccard, m.youden
        ));
    }
    s
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
