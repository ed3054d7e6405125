use crate::data::SliceStack;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::metrics::{binarize, compute_metrics, confusion_counts};
use crate::network::Model;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::adam::AdamState;
use super::log::{EpochRecord, TrainLog};
use super::loss::{cross_entropy_loss, one_hot};

/// Stream for the per-epoch shuffle generators, offset by the epoch number.
const SHUFFLE_STREAM: u64 = 0x5E00;

/// Averages over one pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub dice: f64,
}

/// Network input `[N, H, W, CH]` and one-hot target `[N, H, W, 2]` for a batch.
pub fn make_batch(items: &[&SliceStack]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let pixels: Vec<&Tensor<f32>> = items.iter().map(|s| &s.pixels).collect();
    let labels: Vec<&Tensor<f32>> = items.iter().map(|s| &s.label).collect();
    Ok((Tensor::stack(&pixels)?, one_hot(&Tensor::stack(&labels)?)?))
}

/// Dice of each sample in a batch of predictions `[N, H, W, 2]`.
fn sample_dice(prediction: &Tensor<f32>, items: &[&SliceStack]) -> Result<Vec<f64>> {
    let masks = binarize(prediction)?;
    items
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pred = masks.index_axis0(i)?;
            Ok(compute_metrics(&confusion_counts(&pred, &s.label)?).dice)
        })
        .collect()
}

/// One forward/backward/update on a batch; returns the batch loss and the
/// train-mode prediction.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    input: &Tensor<f32>,
    target: &Tensor<f32>,
) -> Result<(f64, Tensor<f32>)> {
    let prediction = model.forward(input, Mode::Train)?;
    let (loss, upstream) = cross_entropy_loss(target, &prediction)?;
    let grads = model.backward(&upstream)?;
    adam.step(&mut model.params_mut(), &grads.params.tensors())?;
    Ok((loss, prediction))
}

/// One shuffled pass over `data` in batches of `batch_size` (the last batch
/// may be smaller). Returns the mean batch loss and the mean over batches of
/// the batch's average per-slice Dice.
pub fn train_epoch(
    model: &mut Model,
    data: &[SliceStack],
    batch_size: usize,
    adam: &mut AdamState,
    rng: &mut Rng,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let (mut loss_sum, mut dice_sum, mut batches) = (0.0, 0.0, 0usize);
    for chunk in order.chunks(batch_size) {
        let items: Vec<&SliceStack> = chunk.iter().map(|&i| &data[i]).collect();
        let (input, target) = make_batch(&items)?;
        let (loss, prediction) = train_step(model, adam, &input, &target)?;
        let dice = sample_dice(&prediction, &items)?;
        loss_sum += loss;
        dice_sum += dice.iter().sum::<f64>() / dice.len() as f64;
        batches += 1;
    }
    Ok(EpochStats {
        loss: loss_sum / batches as f64,
        dice: dice_sum / batches as f64,
    })
}

/// Per-slice loss and Dice of infer-mode predictions, in data order.
pub fn evaluate_slices(model: &Model, data: &[SliceStack], batch_size: usize) -> Result<Vec<EpochStats>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let items: Vec<&SliceStack> = chunk.iter().collect();
        let (input, target) = make_batch(&items)?;
        let prediction = model.forward_infer(&input)?;
        let dice = sample_dice(&prediction, &items)?;
        for (i, d) in dice.into_iter().enumerate() {
            let (loss, _) = cross_entropy_loss(&target.index_axis0(i)?, &prediction.index_axis0(i)?)?;
            out.push(EpochStats { loss, dice: d });
        }
    }
    Ok(out)
}

/// Mean loss and mean per-slice Dice over every pair, in inference mode.
pub fn evaluate_split(model: &Model, data: &[SliceStack], batch_size: usize) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per = evaluate_slices(model, data, batch_size)?;
    let n = per.len() as f64;
    Ok(EpochStats {
        loss: per.iter().map(|s| s.loss).sum::<f64>() / n,
        dice: per.iter().map(|s| s.dice).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Trains for `opts.epochs` epochs, evaluating on `validation` after each one.
/// `on_epoch` sees every record as it is produced.
pub fn fit(
    model: &mut Model,
    train: &[SliceStack],
    validation: &[SliceStack],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = AdamState::new(opts.learning_rate);
    let mut log = TrainLog::default();
    for epoch in 1..=opts.epochs {
        let mut rng = Rng::derive(opts.seed, SHUFFLE_STREAM + epoch as u64);
        let tr = train_epoch(model, train, opts.batch_size, &mut adam, &mut rng)?;
        let val = evaluate_split(model, validation, opts.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_dice: tr.dice,
            val_loss: val.loss,
            val_dice: val.dice,
        };
        on_epoch(&record);
        log.push(record)?;
    }
    Ok(log)
}
