//! End-to-end workflows behind the command-line tool: synthetic data
//! generation, training, prediction and evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{
    gen_synthetic, list_cases, load_case, make_dataset_split, normalize_volume, read_volume, scale_split,
    stack_pixels, volume_id, volume_stacks, write_mask, write_volume, CaseFiles, DatasetSplit, SliceStack,
    Volume, VolumeKind, RAW_EXT,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_stats, binarize, compute_metrics, confusion_counts, per_slice_csv, write_text, AggregateReport,
    SliceMetrics,
};
use crate::network::{build_model, load_checkpoint, save_checkpoint, Model, ModelConfig};
use crate::plot::write_curves;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::training::{fit, EpochRecord, TrainLog, TrainOptions};

/// Stream for the dataset split, derived from the run seed.
const SPLIT_STREAM: u64 = 0x5B;
/// Slices per inference batch.
const PREDICT_BATCH: usize = 8;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SPLIT_FILE: &str = "split.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PER_SLICE_FILE: &str = "per_slice_metrics.csv";
pub const REPORT_FILE: &str = "report.txt";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub count: usize,
    pub dims: (usize, usize, usize),
    pub seed: u64,
}

/// Writes `count` image/label pairs as `images/<id>.hvol` and `labels/<id>.hvol`.
pub fn run_synth(out_dir: &Path, opts: &SynthOptions) -> Result<Vec<String>> {
    let pairs = gen_synthetic(opts.count, opts.dims, &mut Rng::new(opts.seed))?;
    let (img_dir, lbl_dir) = (out_dir.join("images"), out_dir.join("labels"));
    create_dir(&img_dir)?;
    create_dir(&lbl_dir)?;
    let mut ids = Vec::with_capacity(pairs.len());
    for (image, mask) in &pairs {
        let name = format!("{}.{RAW_EXT}", image.id);
        write_volume(image, &img_dir.join(&name))?;
        write_volume(mask, &lbl_dir.join(&name))?;
        ids.push(image.id.clone());
    }
    Ok(ids)
}

/// Lists the cases under `data_dir` and splits them. `counts` are used as-is
/// when they add up to the number of cases and scaled as a ratio otherwise.
pub fn split_cases(data_dir: &Path, counts: (usize, usize, usize), seed: u64) -> Result<(Vec<CaseFiles>, DatasetSplit)> {
    let cases = list_cases(data_dir)?;
    let n = cases.len();
    let counts = if counts.0 + counts.1 + counts.2 == n {
        counts
    } else {
        scale_split(counts, n)?
    };
    let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
    let split = make_dataset_split(&ids, counts, &mut Rng::derive(seed, SPLIT_STREAM))?;
    Ok((cases, split))
}

/// Loads, normalizes and slices the listed cases, in the order of `ids`.
pub fn load_stacks(cases: &[CaseFiles], ids: &[String], ch: usize) -> Result<Vec<SliceStack>> {
    let per_case: Vec<Vec<SliceStack>> = ids
        .par_iter()
        .map(|id| {
            let case = cases
                .iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown case {id}")))?;
            let (image, mask) = load_case(case)?;
            volume_stacks(&normalize_volume(&image)?, &mask, ch)
        })
        .collect::<Result<_>>()?;
    Ok(per_case.into_iter().flatten().collect())
}

fn split_csv(split: &DatasetSplit) -> String {
    let mut s = String::from("volume_id,subset\n");
    for (name, ids) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        for id in ids {
            s.push_str(&format!("{id},{name}\n"));
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainRequest {
    pub model: ModelConfig,
    pub train: TrainOptions,
    pub split: (usize, usize, usize),
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
    pub plots: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: TrainLog,
    pub split: DatasetSplit,
    /// Slice pairs in the train, validation and test subsets.
    pub slice_counts: (usize, usize, usize),
    pub checkpoint: PathBuf,
}

/// Splits the data, trains, then writes the checkpoint, `train_log.csv`,
/// `split.csv` and (optionally) curve plots.
pub fn run_train(req: &TrainRequest, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    req.model.validate()?;
    let seed = req.model.seed;
    let (cases, split) = split_cases(&req.data_dir, req.split, seed)?;
    let ch = req.model.ch;
    let train = load_stacks(&cases, &split.train, ch)?;
    let validation = load_stacks(&cases, &split.validation, ch)?;
    let test_slices = load_stacks(&cases, &split.test, ch)?.len();

    let mut model: Model = build_model(&req.model, &mut Rng::new(seed))?;
    let opts = TrainOptions { seed, ..req.train.clone() };
    let log = fit(&mut model, &train, &validation, &opts, on_epoch)?;

    create_dir(&req.out_dir)?;
    let checkpoint = req.checkpoint.clone().unwrap_or_else(|| req.out_dir.join(CHECKPOINT_FILE));
    save_checkpoint(&model, &checkpoint)?;
    log.write_csv(&req.out_dir.join(TRAIN_LOG_FILE))?;
    write_text(&req.out_dir.join(SPLIT_FILE), &split_csv(&split))?;
    if req.plots {
        write_curves(&log, &req.out_dir)?;
    }
    Ok(TrainOutcome {
        log,
        split,
        slice_counts: (train.len(), validation.len(), test_slices),
        checkpoint,
    })
}

/// Binary `[H, W]` mask for every slice of a raw (unnormalized) image volume.
pub fn predict_volume(model: &Model, image: &Volume) -> Result<Vec<Tensor<f32>>> {
    let image = normalize_volume(image)?;
    let ch = model.config().ch;
    let mut masks = Vec::with_capacity(image.depth());
    let centers: Vec<usize> = (0..image.depth()).collect();
    for chunk in centers.chunks(PREDICT_BATCH) {
        let stacks = chunk.iter().map(|&k| stack_pixels(&image, k, ch)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor<f32>> = stacks.iter().collect();
        let pred = binarize(&model.forward_infer(&Tensor::stack(&refs)?)?)?;
        for i in 0..chunk.len() {
            masks.push(pred.index_axis0(i)?);
        }
    }
    Ok(masks)
}

/// Volume files in `path`: the file itself, or every volume in a directory
/// (its `images/` subdirectory when present).
fn input_volumes(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = if path.join("images").is_dir() { path.join("images") } else { path.to_path_buf() };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            // A known volume extension is one that volume_id strips.
            p.is_file() && !name.starts_with('.') && volume_id(p) != name
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(files)
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub id: String,
    pub masks: Vec<Tensor<f32>>,
}

/// Predicts every input volume, writing `<id>_<slice>.png` per slice and the
/// assembled `<id>.hvol` mask volume into `out_dir`. `expected_ch`, when
/// given, must equal the checkpoint's channel count.
pub fn run_predict(checkpoint: &Path, input: &Path, out_dir: &Path, expected_ch: Option<usize>) -> Result<Vec<Prediction>> {
    let model: Model = load_checkpoint(checkpoint)?;
    if let Some(ch) = expected_ch.filter(|&ch| ch != model.config().ch) {
        return Err(Error::InvalidConfig(format!(
            "{} was trained with {} input channels, {ch} requested",
            checkpoint.display(),
            model.config().ch
        )));
    }
    create_dir(out_dir)?;
    let mut out = Vec::new();
    for path in input_volumes(input)? {
        let image = read_volume(&path)?;
        let masks = predict_volume(&model, &image)?;
        for (k, m) in masks.iter().enumerate() {
            write_mask(m, &out_dir.join(format!("{}_{k}.png", image.id)))?;
        }
        let volume = Volume::from_slices(image.id.clone(), VolumeKind::Mask, &masks)?;
        write_volume(&volume, &out_dir.join(format!("{}.{RAW_EXT}", image.id)))?;
        out.push(Prediction { id: image.id, masks });
    }
    Ok(out)
}

/// Per-slice metrics of a predicted mask volume against ground truth.
pub fn evaluate_volumes(pred: &Volume, gt: &Volume) -> Result<Vec<SliceMetrics>> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "{}: prediction dims {:?} vs ground truth {:?}",
            gt.id,
            pred.dims(),
            gt.dims()
        )));
    }
    (0..gt.depth())
        .map(|k| {
            let counts = confusion_counts(&pred.slice(k)?, &gt.slice(k)?)?;
            Ok(SliceMetrics {
                volume_id: gt.id.clone(),
                slice_index: k,
                metrics: compute_metrics(&counts),
            })
        })
        .collect()
}

fn read_mask_volume(path: &Path) -> Result<Volume> {
    let v = read_volume(path)?;
    match v.kind {
        VolumeKind::Mask => Ok(v),
        VolumeKind::Image => v.into_mask().map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display()))),
    }
}

/// Writes `metrics.csv`, `per_slice_metrics.csv` and `report.txt`.
pub fn write_report(rows: &[SliceMetrics], out_dir: &Path) -> Result<AggregateReport> {
    let vectors: Vec<_> = rows.iter().map(|r| r.metrics).collect();
    let report = aggregate_stats(&vectors)?;
    create_dir(out_dir)?;
    write_text(&out_dir.join(METRICS_FILE), &report.to_csv())?;
    write_text(&out_dir.join(PER_SLICE_FILE), &per_slice_csv(rows))?;
    write_text(&out_dir.join(REPORT_FILE), &report.to_string())?;
    Ok(report)
}

/// Compares predicted mask volumes with ground truth. Both paths are either
/// single files or directories matched by volume id (a dataset root's
/// `labels/` directory is used for ground truth when present).
pub fn run_evaluate_files(pred: &Path, gt: &Path, out_dir: &Path) -> Result<AggregateReport> {
    let pairs: Vec<(PathBuf, PathBuf)> = if pred.is_file() && gt.is_file() {
        vec![(pred.to_path_buf(), gt.to_path_buf())]
    } else {
        let gt_dir = if gt.join("labels").is_dir() { gt.join("labels") } else { gt.to_path_buf() };
        let truth = input_volumes(&gt_dir)?;
        let preds = input_volumes(pred)?;
        truth
            .into_iter()
            .map(|t| {
                let id = volume_id(&t);
                let p = preds
                    .iter()
                    .find(|p| volume_id(p) == id)
                    .ok_or_else(|| Error::InvalidInput(format!("no prediction for {id} in {}", pred.display())))?;
                Ok((p.clone(), t))
            })
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for (p, t) in pairs {
        let (pv, mut tv) = (read_mask_volume(&p)?, read_mask_volume(&t)?);
        tv.id = pv.id.clone();
        rows.extend(evaluate_volumes(&pv, &tv)?);
    }
    write_report(&rows, out_dir)
}

/// Evaluates a checkpoint on the test subset of `data_dir`, reproducing the
/// training split from the checkpoint's seed.
pub fn run_evaluate_model(
    checkpoint: &Path,
    data_dir: &Path,
    counts: (usize, usize, usize),
    out_dir: &Path,
) -> Result<AggregateReport> {
    let model: Model = load_checkpoint(checkpoint)?;
    let (cases, split) = split_cases(data_dir, counts, model.config().seed)?;
    if split.test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::new();
    for id in &split.test {
        let case = cases.iter().find(|c| &c.id == id).expect("split ids come from cases");
        let (image, mask) = load_case(case)?;
        let masks = predict_volume(&model, &image)?;
        let pred = Volume::from_slices(id.clone(), VolumeKind::Mask, &masks)?;
        rows.extend(evaluate_volumes(&pred, &mask)?);
    }
    write_report(&rows, out_dir)
}
