//! Independent reference computations used by the integration tests.

use cardioseg::{Rng, Tensor};

/// Random `side × side` binary mask with foreground probability `p`.
pub fn random_mask(side: usize, p: f64, rng: &mut Rng) -> Tensor<f32> {
    let data = (0..side * side).map(|_| if rng.uniform() < p { 1.0 } else { 0.0 }).collect();
    Tensor::from_vec(&[side, side], data).unwrap()
}

/// Brute-force metric values from two masks: each formula evaluated directly
/// from its own per-pixel loop.
pub struct BruteForce {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub dice: f64,
    pub jaccard: f64,
    pub youden: f64,
}

pub fn brute_force(pred: &Tensor<f32>, gt: &Tensor<f32>) -> BruteForce {
    let p = pred.data();
    let g = gt.data();
    let count = |f: &dyn Fn(bool, bool) -> bool| {
        p.iter().zip(g).filter(|(&a, &b)| f(a == 1.0, b == 1.0)).count() as u64
    };
    let tp = count(&|a, b| a && b);
    let fp = count(&|a, b| a && !b);
    let tn = count(&|a, b| !a && !b);
    let fn_ = count(&|a, b| !a && b);

    let positives = g.iter().filter(|&&v| v == 1.0).count() as f64;
    let negatives = g.iter().filter(|&&v| v == 0.0).count() as f64;
    let predicted = p.iter().filter(|&&v| v == 1.0).count() as f64;
    let union = p.iter().zip(g).filter(|(&a, &b)| a == 1.0 || b == 1.0).count() as f64;
    let inter = tp as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let empty = union == 0.0;
    let tpr = if empty { 1.0 } else { div(inter, positives) };
    let fpr = if empty { 0.0 } else { div(fp as f64, negatives) };
    BruteForce {
        tp,
        fp,
        tn,
        fn_,
        tpr,
        fpr,
        ppv: if empty { 1.0 } else { div(inter, predicted) },
        dice: if empty { 1.0 } else { div(2.0 * inter, positives + predicted) },
        jaccard: if empty { 1.0 } else { div(inter, union) },
        youden: tpr - fpr,
    }
}

/// Hand-built single-file NIfTI-1 image: 352-byte header block, data at
/// offset 352, axis i fastest.
pub fn nifti_fixture(dims: [i16; 3], datatype: i16, big_endian: bool, values: &[f64]) -> Vec<u8> {
    let mut b = vec![0u8; 352];
    let i16b = |v: i16| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    let i32b = |v: i32| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    let f32b = |v: f32| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    b[0..4].copy_from_slice(&i32b(348));
    b[40..42].copy_from_slice(&i16b(3));
    for (k, d) in dims.iter().enumerate() {
        b[42 + 2 * k..44 + 2 * k].copy_from_slice(&i16b(*d));
    }
    for k in 3..7 {
        b[42 + 2 * k..44 + 2 * k].copy_from_slice(&i16b(1));
    }
    b[70..72].copy_from_slice(&i16b(datatype));
    b[72..74].copy_from_slice(&i16b(if datatype == 4 { 16 } else { 32 }));
    b[108..112].copy_from_slice(&f32b(352.0));
    b[112..116].copy_from_slice(&f32b(1.0));
    b[344..348].copy_from_slice(b"n+1\0");
    for &v in values {
        if datatype == 4 {
            b.extend(i16b(v as i16));
        } else {
            b.extend(f32b(v as f32));
        }
    }
    b
}
