//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criterion 9 runs only when `CARDIOSEG_MSD_DIR` points at a decathlon
//! heart dataset root (with `imagesTr/` and `labelsTr/`).

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cardioseg::data::{
    decode_nifti, encode_raw, gen_synthetic, make_dataset_split, neighbor_indices, normalize_volume, read_volume,
    extract_slice_stack, list_cases, load_case, scale_split, volume_stacks, write_volume, SliceStack, Volume, VolumeKind,
};
use cardioseg::metrics::{compute_metrics, confusion_counts, ConfusionCounts};
use cardioseg::network::{build_model, read_checkpoint, write_checkpoint};
use cardioseg::pipeline::{run_evaluate_files, run_evaluate_model, run_synth, run_train, SynthOptions, TrainRequest, METRICS_FILE, REPORT_FILE, TRAIN_LOG_FILE};
use cardioseg::training::{cross_entropy_loss, evaluate_split, fit, make_batch, train_step, AdamState, TrainOptions};
use cardioseg::{Mode, Model, ModelConfig, Rng, Tensor};

use common::gradcheck::{all_layer_checks, model_checks};
use common::oracles::{brute_force, nifti_fixture, random_mask};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let mut checks = all_layer_checks();
    checks.extend(model_checks());
    let worst_layer = checks.iter().filter(|c| c.tol == 1e-4).map(|c| c.max_rel).fold(0.0, f64::max);
    let worst_model = checks.iter().filter(|c| c.tol == 1e-3).map(|c| c.max_rel).fold(0.0, f64::max);
    for c in &checks {
        ensure(c.passed(), || format!("{}: max rel error {:.3e} ≥ {:.0e}", c.name, c.max_rel, c.tol))?;
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{} checks; worst layer/loss rel error {worst_layer:.2e} (< 1e-4), whole model {worst_model:.2e} (< 1e-3)",
        checks.len()
    ))
}

fn c2_metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    for pair in 0..100 {
        let p = rng.range(0.05, 0.6);
        let pred = random_mask(32, p, &mut rng);
        let gt = random_mask(32, p, &mut rng);
        let c = confusion_counts(&pred, &gt).map_err(|e| e.to_string())?;
        let o = brute_force(&pred, &gt);
        ensure((c.tp, c.fp, c.tn, c.fn_) == (o.tp, o.fp, o.tn, o.fn_), || format!("pair {pair}: counts differ"))?;
        ensure(c.total() == 32 * 32, || format!("pair {pair}: counts do not cover the image"))?;
        let m = compute_metrics(&c);
        let want = [o.tpr, o.fpr, o.ppv, o.dice, o.jaccard, o.youden];
        for (got, want) in m.values().iter().zip(want) {
            ensure((got - want).abs() <= 1e-12, || format!("pair {pair}: {got} vs oracle {want}"))?;
        }
        let j = m.jaccard;
        ensure((m.dice - 2.0 * j / (1.0 + j)).abs() <= 1e-9, || format!("pair {pair}: dice/jaccard identity"))?;
        ensure(m.youden == m.tpr - m.fpr, || format!("pair {pair}: youden identity"))?;
    }
    let m = compute_metrics(&ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
    let hand = [0.5, 0.5, 0.5, 0.5, 1.0 / 3.0, 0.0];
    for (got, want) in m.values().iter().zip(hand) {
        ensure((got - want).abs() <= 1e-15, || format!("hand case: {got} vs {want}"))?;
    }
    within(Duration::from_secs(5), start)?;
    Ok("100 random 32x32 pairs match the brute-force oracle; hand case (0.5, 0.5, 0.5, 0.5, 1/3, 0)".into())
}

/// Hand count of parameters for a miniature config, following the layer list.
fn hand_param_count(nf: usize, ch: usize, depth: usize) -> usize {
    let conv = |k: usize, cin: usize, cout: usize| k * k * cin * cout + cout;
    let stage = |cin: usize, cout: usize| conv(3, cin, cout) + 2 * cout;
    let block = |cin: usize, cout: usize| stage(cin, cout) + stage(cout, cout);
    let f = |l: usize| nf << l;
    let mut total = 0;
    let mut cin = ch;
    for l in 0..depth {
        total += block(cin, f(l));
        cin = f(l);
    }
    total += block(cin, f(depth));
    for l in (0..depth).rev() {
        total += block(f(l + 1) + f(l), f(l));
    }
    total + conv(1, nf, 2)
}

fn c3_shapes() -> Outcome {
    let start = Instant::now();
    let mut forwards = 0;
    for nf in [16, 64] {
        for ch in [1, 3, 5, 7] {
            let cfg = ModelConfig { nf, ch, depth: 4, ..Default::default() };
            let model: Model = build_model(&cfg, &mut Rng::new(0)).map_err(|e| e.to_string())?;
            let shape = model.output_shape(&[320, 320, ch]).map_err(|e| e.to_string())?;
            ensure(shape == [320, 320, 2], || format!("nf {nf} ch {ch}: inferred shape {shape:?}"))?;
            ensure(model.param_count() == hand_param_count(nf, ch, 4), || format!("nf {nf} ch {ch}: parameter count"))?;
            // Real forward passes for the thin family and one thick model.
            if nf == 16 || ch == 1 {
                let x = Tensor::zeros(&[320, 320, ch]).map_err(|e| e.to_string())?;
                let y = model.forward_infer(&x).map_err(|e| e.to_string())?;
                ensure(y.shape() == [320, 320, 2], || format!("nf {nf} ch {ch}: forward shape {:?}", y.shape()))?;
                forwards += 1;
            }
        }
    }
    // Miniature configurations against hand-expanded totals.
    let cases = [((2, 1, 1), 468), ((1, 1, 1), 0), ((2, 3, 2), 0)];
    for ((nf, ch, depth), pinned) in cases {
        let cfg = ModelConfig { nf, ch, depth, ..Default::default() };
        let model: Model = build_model(&cfg, &mut Rng::new(0)).map_err(|e| e.to_string())?;
        let want = if pinned > 0 { pinned } else { hand_param_count(nf, ch, depth) };
        ensure(model.param_count() == want, || format!("nf {nf} ch {ch} depth {depth}: {} params, hand count {want}", model.param_count()))?;
        let side = 8 << depth;
        let mut m = model.clone();
        let y = m.forward(&Tensor::zeros(&[2, side, side, ch]).unwrap(), Mode::Train).map_err(|e| e.to_string())?;
        ensure(y.shape() == [2, side, side, 2], || format!("miniature forward shape {:?}", y.shape()))?;
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("8 configs map 320x320xCH to 320x320x2 ({forwards} real forwards); parameter counts match hand expansion"))
}

fn stacks_of(pairs: &[(Volume, Volume)], ids: &[String], ch: usize) -> Vec<SliceStack> {
    pairs
        .iter()
        .filter(|(img, _)| ids.contains(&img.id))
        .flat_map(|(img, mask)| volume_stacks(&normalize_volume(img).unwrap(), mask, ch).unwrap())
        .collect()
}

fn c4_synthetic_learning() -> Outcome {
    let start = Instant::now();
    let seed = 7;
    let pairs = gen_synthetic(60, (64, 64, 8), &mut Rng::new(seed)).map_err(|e| e.to_string())?;
    let ids: Vec<String> = pairs.iter().map(|(img, _)| img.id.clone()).collect();
    let counts = scale_split((14, 2, 4), ids.len()).map_err(|e| e.to_string())?;
    ensure(counts == (42, 6, 12), || format!("scaled split {counts:?}"))?;
    let split = make_dataset_split(&ids, counts, &mut Rng::derive(seed, 1)).map_err(|e| e.to_string())?;
    let (train, val, test) = (stacks_of(&pairs, &split.train, 1), stacks_of(&pairs, &split.validation, 1), stacks_of(&pairs, &split.test, 1));
    let cfg = ModelConfig { nf: 8, ch: 1, depth: 3, seed, ..Default::default() };
    let mut model: Model = build_model(&cfg, &mut Rng::new(seed)).map_err(|e| e.to_string())?;
    let opts = TrainOptions { epochs: 10, batch_size: 8, learning_rate: 1e-3, seed };
    let log = fit(&mut model, &train, &val, &opts, |_| {}).map_err(|e| e.to_string())?;
    let held_out = evaluate_split(&model, &test, 8).map_err(|e| e.to_string())?;
    ensure(held_out.dice >= 0.90, || format!("held-out mean Dice {:.4} < 0.90", held_out.dice))?;
    Ok(format!(
        "held-out mean Dice {:.4} ≥ 0.90 on {} test slices after {} epochs (final val Dice {:.4}) in {:.0?} (target < 10 min)",
        held_out.dice,
        test.len(),
        log.records().len(),
        log.records().last().map_or(0.0, |r| r.val_dice),
        start.elapsed()
    ))
}

fn c5_slice_stacks() -> Outcome {
    let (h, w, d) = (6, 6, 5);
    let data: Vec<f32> = (0..h * w * d).map(|i| i as f32 * 0.5 - 7.0).collect();
    let image = Volume::new("v", VolumeKind::Image, Tensor::from_vec(&[h, w, d], data).unwrap()).unwrap();
    let mask_data: Vec<f32> = (0..h * w * d).map(|i| f32::from(i % 3 == 0)).collect();
    let mask = Volume::new("v", VolumeKind::Mask, Tensor::from_vec(&[h, w, d], mask_data).unwrap()).unwrap();
    let mut checked = 0;
    for ch in [1, 3, 5] {
        for center in 0..d {
            let s = extract_slice_stack(&image, &mask, center, ch).map_err(|e| e.to_string())?;
            let r = (ch / 2) as isize;
            for c in 0..ch {
                let want_k = (center as isize + c as isize - r).clamp(0, d as isize - 1) as usize;
                ensure(neighbor_indices(center, ch, d)[c] == want_k, || format!("index table ch {ch} center {center}"))?;
                for y in 0..h {
                    for x in 0..w {
                        let got = s.pixels.get(&[y, x, c]).unwrap();
                        let want = image.voxels().get(&[y, x, want_k]).unwrap();
                        ensure(got == want, || format!("ch {ch} center {center} channel {c} at ({y},{x})"))?;
                        checked += 1;
                    }
                }
            }
            for y in 0..h {
                for x in 0..w {
                    ensure(s.label.get(&[y, x]).unwrap() == mask.voxels().get(&[y, x, center]).unwrap(), || "label".into())?;
                }
            }
            if ch == 1 {
                ensure(s.pixels.data() == image.slice(center).unwrap().data(), || format!("ch 1 center {center}"))?;
            }
        }
    }
    ensure(neighbor_indices(0, 3, 10) == [0, 0, 1] && neighbor_indices(5, 5, 10) == [3, 4, 5, 6, 7], || "hand cases".into())?;
    Ok(format!("{checked} channel pixels match clamped neighbor slices on 6x6x5; CH=1 equals the slice"))
}

fn end_to_end(root: &Path) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
    let data = root.join("data");
    let out = root.join("run");
    let eval = root.join("eval");
    run_synth(&data, &SynthOptions { count: 10, dims: (32, 32, 4), seed: 11 }).map_err(|e| e.to_string())?;
    let req = TrainRequest {
        model: ModelConfig { nf: 4, ch: 3, depth: 2, seed: 11, ..Default::default() },
        train: TrainOptions { epochs: 2, batch_size: 4, ..Default::default() },
        split: (14, 2, 4),
        data_dir: data.clone(),
        out_dir: out.clone(),
        checkpoint: None,
        plots: false,
    };
    let trained = run_train(&req, |_| {}).map_err(|e| e.to_string())?;
    run_evaluate_model(&trained.checkpoint, &data, (14, 2, 4), &eval).map_err(|e| e.to_string())?;
    let read = |p: &Path| fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    Ok((read(&out.join(TRAIN_LOG_FILE))?, read(&eval.join(METRICS_FILE))?, read(&eval.join(REPORT_FILE))?))
}

fn c6_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = end_to_end(a.path())?;
    let rb = end_to_end(b.path())?;
    ensure(ra.0 == rb.0, || "train logs differ".into())?;
    ensure(ra.1 == rb.1 && ra.2 == rb.2, || "metric reports differ".into())?;
    Ok(format!(
        "two synth → train (2 epochs) → evaluate runs: identical TrainLog ({} bytes) and reports ({} + {} bytes)",
        ra.0.len(),
        ra.1.len(),
        ra.2.len()
    ))
}

fn c7_loss_and_optimizer() -> Outcome {
    let y = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![1.0, 0.0]).unwrap();
    let yh = Tensor::from_vec(&[1, 1, 1, 2], vec![0.5, 0.5]).unwrap();
    let (loss, _) = cross_entropy_loss(&y, &yh).map_err(|e| e.to_string())?;
    let want = -(0.5f64).ln();
    ensure((loss - want).abs() <= 1e-9, || format!("single-pixel loss {loss} vs {want}"))?;

    let mut p = Tensor::<f64>::zeros(&[1]).unwrap();
    let g = Tensor::<f64>::full(&[1], 1.0).unwrap();
    let mut adam = AdamState::<f64>::default();
    adam.step(&mut [&mut p], &[&g]).map_err(|e| e.to_string())?;
    let after_one = p.data()[0];
    ensure((after_one + 0.001).abs() < 1e-8, || format!("Adam step gives {after_one}"))?;

    let pairs = gen_synthetic(1, (64, 64, 4), &mut Rng::new(3)).map_err(|e| e.to_string())?;
    let (img, mask) = &pairs[0];
    let stacks = volume_stacks(&normalize_volume(img).unwrap(), mask, 1).map_err(|e| e.to_string())?;
    let items: Vec<&SliceStack> = stacks.iter().collect();
    let (x, target) = make_batch(&items).map_err(|e| e.to_string())?;
    let cfg = ModelConfig { nf: 16, ch: 1, depth: 3, seed: 3, ..Default::default() };
    let mut model: Model = build_model(&cfg, &mut Rng::new(3)).map_err(|e| e.to_string())?;
    let mut adam = AdamState::default();
    let mut losses = Vec::with_capacity(200);
    for _ in 0..200 {
        losses.push(train_step(&mut model, &mut adam, &x, &target).map_err(|e| e.to_string())?.0);
    }
    let ratio = losses[0] / losses[199];
    ensure(ratio >= 10.0, || format!("overfit loss {:.4} → {:.4} (×{ratio:.1})", losses[0], losses[199]))?;
    Ok(format!(
        "single-pixel loss {loss:.10} (−ln 0.5); Adam step {after_one:.10}; overfit 4 pairs: loss {:.4} → {:.5} (÷{ratio:.0})",
        losses[0], losses[199]
    ))
}

fn c8_formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    // Raw volume: bytes → volume → bytes.
    let (img, mask) = gen_synthetic(1, (16, 16, 3), &mut Rng::new(8)).map_err(|e| e.to_string())?.remove(0);
    for v in [&img, &mask] {
        let sub = dir.path().join(format!("{:?}", v.kind));
        fs::create_dir_all(&sub).unwrap();
        let path = sub.join(format!("{}.hvol", v.id));
        write_volume(v, &path).map_err(|e| e.to_string())?;
        let bytes = fs::read(&path).unwrap();
        let back = read_volume(&path).map_err(|e| e.to_string())?;
        ensure(&back == v && encode_raw(&back) == bytes, || "raw volume round trip".into())?;
    }
    // Checkpoint: model → bytes → model → bytes.
    let cfg = ModelConfig { nf: 2, ch: 3, depth: 2, ..Default::default() };
    let mut model: Model = build_model(&cfg, &mut Rng::new(1)).unwrap();
    model.forward(&Tensor::he_normal(&[2, 8, 8, 3], 1, &mut Rng::new(2)).unwrap(), Mode::Train).unwrap();
    let mut a = Vec::new();
    write_checkpoint(&model, &mut a).map_err(|e| e.to_string())?;
    let back: Model = read_checkpoint(a.as_slice()).map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    write_checkpoint(&back, &mut b).map_err(|e| e.to_string())?;
    ensure(a == b, || "checkpoint bytes differ after round trip".into())?;
    // NIfTI fixtures.
    let values: Vec<f64> = (0..2 * 3 * 4).map(|i| f64::from(i) * 3.0 - 20.0).collect();
    let mut fixtures = 0;
    for datatype in [4i16, 16] {
        for big in [false, true] {
            let bytes = nifti_fixture([2, 3, 4], datatype, big, &values);
            let v = decode_nifti(&bytes, "fixture", VolumeKind::Image).map_err(|e| e.to_string())?;
            ensure(v.dims() == (2, 3, 4), || format!("fixture dims {:?}", v.dims()))?;
            for k in 0..4 {
                for j in 0..3 {
                    for i in 0..2 {
                        let want = values[i + 2 * (j + 3 * k)] as f32;
                        ensure(v.voxels().get(&[i, j, k]).unwrap() == want, || format!("dt {datatype} voxel ({i},{j},{k})"))?;
                    }
                }
            }
            fixtures += 1;
        }
    }
    let code2 = decode_nifti(&nifti_fixture([2, 2, 2], 2, false, &[]), "u8", VolumeKind::Image);
    ensure(code2.is_err_and(|e| e.to_string().contains('2')), || "datatype 2 must be rejected".into())?;
    // Evaluate report layout.
    let gt = dir.path().join("gt.hvol");
    write_volume(&mask, &gt).unwrap();
    let report = run_evaluate_files(&gt, &gt, &dir.path().join("eval")).map_err(|e| e.to_string())?;
    let text = report.to_string();
    let rows: Vec<&str> = text.lines().filter(|l| l.contains(" ± ")).collect();
    let names = ["Recall", "Fallout", "Precision", "Dice score", "Jaccard index", "Youden's index"];
    ensure(rows.len() == 6, || format!("{} metric rows", rows.len()))?;
    for (row, name) in rows.iter().zip(names) {
        let rest = row.strip_prefix(name).and_then(|r| r.strip_prefix("  "));
        let ok = rest.is_some_and(|r| {
            let parts: Vec<&str> = r.split(" ± ").collect();
            parts.len() == 2 && parts.iter().all(|p| p.parse::<f64>().is_ok())
        });
        ensure(ok, || format!("bad report row `{row}`"))?;
    }
    Ok(format!(
        "raw volume and checkpoint round-trip bitwise; {fixtures} NIfTI fixtures (int16/float32, both byte orders) parse; report has the six rows"
    ))
}

/// `None` when no dataset is configured.
fn c9_real_data() -> Option<Outcome> {
    let root = std::env::var_os("CARDIOSEG_MSD_DIR")?;
    Some((|| {
        let root = Path::new(&root);
        let cases = list_cases(root).map_err(|e| e.to_string())?;
        ensure(cases.len() == 20, || format!("expected 20 labeled scans, found {}", cases.len()))?;
        let mut depth = std::collections::HashMap::new();
        for case in &cases {
            let (img, _) = load_case(case).map_err(|e| e.to_string())?;
            depth.insert(case.id.clone(), img.depth());
        }
        let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
        let totals = |ids: &[String]| ids.iter().map(|i| depth[i]).sum::<usize>();
        // The published totals pin down which scans were drawn; find the
        // first seed whose split reproduces them.
        let want = (1578, 218, 455);
        let seed = (0..100_000u64).find(|&s| {
            let sp = make_dataset_split(&ids, (14, 2, 4), &mut Rng::derive(s, 0x5B)).unwrap();
            (totals(&sp.train), totals(&sp.validation), totals(&sp.test)) == want
        });
        let seed = seed.ok_or_else(|| {
            format!("no seed below 100000 yields slice totals {want:?}; total slices {}", totals(&ids))
        })?;
        let epochs = std::env::var("CARDIOSEG_MSD_EPOCHS").ok().and_then(|e| e.parse().ok()).unwrap_or(1);
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let req = TrainRequest {
            model: ModelConfig { seed, ..Default::default() },
            train: TrainOptions { epochs, ..Default::default() },
            split: (14, 2, 4),
            data_dir: root.to_path_buf(),
            out_dir: out.path().join("run"),
            checkpoint: None,
            plots: false,
        };
        let trained = run_train(&req, |r| eprintln!("  msd epoch {}: val dice {:.4}", r.epoch, r.val_dice)).map_err(|e| e.to_string())?;
        ensure(trained.slice_counts == want, || format!("slice pairs {:?}", trained.slice_counts))?;
        let report = run_evaluate_model(&trained.checkpoint, root, (14, 2, 4), &out.path().join("eval")).map_err(|e| e.to_string())?;
        Ok(format!(
            "seed {seed}: slice pairs 1578/218/455; {epochs} epoch(s); test Dice {:.4} ± {:.4} (logged, not asserted)",
            report.dice().mean,
            report.dice().std
        ))
    })())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 gradient correctness", c1_gradients),
        ("2 metric oracle equivalence", c2_metric_oracle),
        ("3 shape contract", c3_shapes),
        ("4 synthetic learning", c4_synthetic_learning),
        ("5 2.5D correctness", c5_slice_stacks),
        ("6 determinism", c6_determinism),
        ("7 loss and optimizer", c7_loss_and_optimizer),
        ("8 format fidelity", c8_formats),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));
    let mut failed = 0;
    for (name, run) in criteria {
        if !selected(name) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {name}: {detail} ({t:.1?})"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {name}: {why} ({t:.1?})");
            }
        }
    }
    if selected("9 real-data pipeline") {
        match c9_real_data() {
            None => println!("[SKIP] criterion 9 real-data pipeline: CARDIOSEG_MSD_DIR not set"),
            Some(Ok(detail)) => println!("[PASS] criterion 9 real-data pipeline: {detail}"),
            Some(Err(why)) => {
                failed += 1;
                println!("[FAIL] criterion 9 real-data pipeline: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
