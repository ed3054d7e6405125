use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Shuffles `ids` with `rng`, then cuts train / validation / test in order.
pub fn make_dataset_split(ids: &[String], counts: (usize, usize, usize), rng: &mut Rng) -> Result<DatasetSplit> {
    let (a, b, c) = counts;
    if a + b + c != ids.len() {
        return Err(Error::InvalidConfig(format!(
            "split {a}+{b}+{c} does not cover {} volumes",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    rng.shuffle(&mut shuffled);
    let test = shuffled.split_off(a + b);
    let validation = shuffled.split_off(a);
    Ok(DatasetSplit {
        train: shuffled,
        validation,
        test,
        seed: rng.seed(),
    })
}

/// Scales `ratio` to `total` items: largest-remainder rounding, ties to the
/// earlier part.
pub fn scale_split(ratio: (usize, usize, usize), total: usize) -> Result<(usize, usize, usize)> {
    let parts = [ratio.0, ratio.1, ratio.2];
    let sum: usize = parts.iter().sum();
    if sum == 0 {
        return Err(Error::InvalidConfig("split ratio is all zeros".into()));
    }
    let mut counts = parts.map(|p| p * total / sum);
    let mut order = [0, 1, 2];
    order.sort_by_key(|&i| std::cmp::Reverse(parts[i] * total % sum));
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    Ok((counts[0], counts[1], counts[2]))
}
