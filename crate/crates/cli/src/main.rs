//! `cardioseg`: train, apply and score heart MRI segmentation models.

mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cardioseg::network::ModelConfig;
use cardioseg::pipeline::{
    run_evaluate_files, run_evaluate_model, run_predict, run_synth, run_train, SynthOptions, TrainRequest,
};
use cardioseg::training::TrainOptions;
use clap::{Args, Parser, Subcommand};

use settings::{Settings, Triple};

const THREADS_ENV: &str = "CARDIOSEG_THREADS";

#[derive(Parser)]
#[command(name = "cardioseg", version, about = "Encoder-decoder FCN segmentation of heart MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Segment image volumes with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predictions (or a checkpoint's test split) against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Base filter count NF.
    #[arg(long)]
    nf: Option<usize>,
    /// Input channels CH (adjacent slices, odd).
    #[arg(long)]
    ch: Option<usize>,
    /// Encoder levels.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset root with images/ and labels/ (or imagesTr/ and labelsTr/).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Checkpoint path; defaults to <out-dir>/model.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Train,validation,test volume counts, or a ratio scaled to the dataset.
    #[arg(long)]
    split: Option<Triple>,
    /// Also write loss and Dice curve PNGs.
    #[arg(long)]
    plots: bool,
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// An image volume, or a directory of them.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Expected input channels; must match the checkpoint.
    #[arg(long)]
    ch: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted mask volume or directory.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth mask volume or directory.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Evaluate this checkpoint on the test split of --data-dir instead.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    split: Option<Triple>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: Option<usize>,
    /// Volume size H,W,D; H and W must be multiples of 16.
    #[arg(long)]
    dims: Option<Triple>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const DEFAULT_SPLIT: Triple = Triple(14, 2, 4);

fn train(a: TrainArgs) -> Result<()> {
    let keys = [
        "nf", "ch", "depth", "epochs", "batch-size", "lr", "seed", "data-dir", "checkpoint", "out-dir", "split", "plots",
    ];
    let s = Settings::load(a.config.as_deref(), &keys)?;
    let defaults = ModelConfig::default();
    let model = ModelConfig {
        nf: s.or(a.nf, "nf", defaults.nf)?,
        ch: s.or(a.ch, "ch", defaults.ch)?,
        depth: s.or(a.depth, "depth", defaults.depth)?,
        seed: s.or(a.seed, "seed", defaults.seed)?,
        ..defaults
    };
    model.validate()?;
    let base = TrainOptions::default();
    let train = TrainOptions {
        epochs: s.or(a.epochs, "epochs", base.epochs)?,
        batch_size: s.or(a.batch_size, "batch-size", base.batch_size)?,
        learning_rate: s.or(a.lr, "lr", base.learning_rate)?,
        seed: model.seed,
    };
    if train.batch_size == 0 {
        bail!("--batch-size must be positive");
    }
    if !(train.learning_rate > 0.0) {
        bail!("--lr must be positive");
    }
    let Triple(tr, va, te) = s.or(a.split, "split", DEFAULT_SPLIT)?;
    let req = TrainRequest {
        model,
        train,
        split: (tr, va, te),
        data_dir: s.required(a.data_dir, "data-dir")?,
        out_dir: s.required(a.out_dir, "out-dir")?,
        checkpoint: s.pick(a.checkpoint, "checkpoint")?,
        plots: s.switch(a.plots, "plots")?,
    };
    println!(
        "model nf={} ch={} depth={} seed={}; {} epochs, batch {}, lr {}",
        req.model.nf, req.model.ch, req.model.depth, req.model.seed, req.train.epochs, req.train.batch_size, req.train.learning_rate
    );
    let out = run_train(&req, |r| {
        println!(
            "epoch {:>3}  train loss {:.6}  dice {:.4}  |  val loss {:.6}  dice {:.4}",
            r.epoch, r.train_loss, r.train_dice, r.val_loss, r.val_dice
        );
    })?;
    let (a, b, c) = out.slice_counts;
    println!(
        "volumes {}/{}/{}, slice pairs {a}/{b}/{c} (train/validation/test)",
        out.split.train.len(),
        out.split.validation.len(),
        out.split.test.len()
    );
    println!("checkpoint written to {}", out.checkpoint.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref(), &["checkpoint", "input", "out-dir", "ch"])?;
    let checkpoint: PathBuf = s.required(a.checkpoint, "checkpoint")?;
    let input: PathBuf = s.required(a.input, "input")?;
    let out_dir: PathBuf = s.required(a.out_dir, "out-dir")?;
    let preds = run_predict(&checkpoint, &input, &out_dir, s.pick(a.ch, "ch")?)?;
    for p in &preds {
        println!("{}: {} slices", p.id, p.masks.len());
    }
    println!("masks written to {}", out_dir.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let keys = ["pred", "gt", "checkpoint", "data-dir", "split", "out-dir"];
    let s = Settings::load(a.config.as_deref(), &keys)?;
    let out_dir: PathBuf = s.required(a.out_dir, "out-dir")?;
    let pred: Option<PathBuf> = s.pick(a.pred, "pred")?;
    let gt: Option<PathBuf> = s.pick(a.gt, "gt")?;
    let checkpoint: Option<PathBuf> = s.pick(a.checkpoint, "checkpoint")?;
    let report = match (pred, gt, checkpoint) {
        (Some(p), Some(g), None) => run_evaluate_files(&p, &g, &out_dir)?,
        (None, None, Some(c)) => {
            let data_dir: PathBuf = s.required(a.data_dir, "data-dir")?;
            let Triple(tr, va, te) = s.or(a.split, "split", DEFAULT_SPLIT)?;
            run_evaluate_model(&c, &data_dir, (tr, va, te), &out_dir)?
        }
        _ => bail!("give either --pred and --gt, or --checkpoint with --data-dir"),
    };
    print!("{report}");
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let s = Settings::load(a.config.as_deref(), &["count", "dims", "seed", "out-dir"])?;
    let Triple(h, w, d) = s.or(a.dims, "dims", Triple(64, 64, 16))?;
    let opts = SynthOptions {
        count: s.or(a.count, "count", 20)?,
        dims: (h, w, d),
        seed: s.or(a.seed, "seed", 0)?,
    };
    let out_dir: PathBuf = s.required(a.out_dir, "out-dir")?;
    let ids = run_synth(&out_dir, &opts)?;
    println!("{} volumes of {h}x{w}x{d} written to {}", ids.len(), out_dir.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV}={value} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}
