use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use biolite_core::data::{
    load_manifest, read_rgb, split, write_mask, LabeledFrame, Manifest, Preprocess, SplitName,
};
use biolite_core::metrics::{evaluate, evaluate_per_image};
use biolite_core::model::{build, ArchConfig, NUM_CLASSES};
use biolite_core::runtime::{
    benchmark, describe as complexity, write_overlay, Predictor, SoftmaxMode,
    WeightsFile,
};
use biolite_core::synth::{generate_dataset, write_dataset, Difficulty};
use biolite_core::train::train_with_progress;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{create_dir, out_dir, write_file, RunManifest};
use crate::{BenchArgs, DescribeArgs, EvalArgs, InferArgs, SynthArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn manifest_at(path: &Path) -> Result<Manifest> {
    let file = if path.is_dir() { path.join("manifest.tsv") } else { path.to_path_buf() };
    Ok(load_manifest(&file)?)
}

fn frames_of(m: &Manifest, name: &str, seed: u64) -> Result<Vec<LabeledFrame>> {
    if name == "all" {
        return Ok(m.load_frames(None)?);
    }
    let which = SplitName::parse(name).map_err(|e| CliError::Usage(e.to_string()))?;
    if m.entries.iter().any(|e| e.split.is_some()) {
        return Ok(m.load_frames(Some(which))?);
    }
    // No recorded assignment: derive one from the seed.
    let ids = m.ids(None);
    let s = split(&ids, seed)?;
    let wanted = match which {
        SplitName::Train => s.train,
        SplitName::Val => s.val,
        SplitName::Test => s.test,
    };
    let all = m.load_frames(None)?;
    Ok(all.into_iter().filter(|f| wanted.contains(&f.id)).collect())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let difficulty = Difficulty::parse(&a.difficulty).map_err(|e| CliError::Usage(e.to_string()))?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let dir = out_dir(a.out.as_deref(), "synth");
    create_dir(&dir)?;
    let config = BTreeMap::from([
        ("n".to_string(), a.n.to_string()),
        ("difficulty".into(), difficulty.as_str().into()),
        ("size".into(), a.size.to_string()),
    ]);
    let mut run = RunManifest::start(&dir, "synth", a.seed, config)?;
    let frames = generate_dataset(a.n, difficulty, a.seed, a.size)?;
    write_dataset(&frames, &dir, difficulty, a.seed)?;
    run.output(&dir.join("manifest.tsv"));
    run.finish()?;
    println!("wrote {} {} frames to {}", a.n, difficulty.as_str(), dir.display());
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let t = &mut cfg.train;
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.image_size {
        t.preprocess.size = v;
    }
    if a.max_steps.is_some() {
        t.max_steps = a.max_steps;
    }
    if a.no_clahe {
        t.preprocess.clahe = None;
    }
    if a.no_augment {
        t.augment.enabled = false;
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.arch.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let seed = cfg.train.seed;
    let manifest = manifest_at(&a.data)?;
    let train_set = frames_of(&manifest, "train", seed)?;
    let val_set = frames_of(&manifest, "val", seed)?;

    let dir = out_dir(a.out.as_deref(), "train");
    create_dir(&dir)?;
    let mut resolved = cfg.resolved();
    resolved.insert("data".into(), a.data.display().to_string());
    let mut run = RunManifest::start(&dir, "train", seed, resolved)?;
    write_file(&dir.join("config.txt"), cfg.render().as_bytes())?;
    run.output(&dir.join("config.txt"));

    let model = build(cfg.arch, seed)?;
    eprintln!(
        "training on {} frames, validating on {} ({} epochs max)",
        train_set.len(),
        val_set.len(),
        cfg.train.max_epochs
    );
    let out = train_with_progress(&train_set, &val_set, model, &cfg.train, |e| {
        eprintln!(
            "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_dice {:.4}  val_miou {:.4}  lr {:e}",
            e.epoch, e.train_loss, e.val_loss, e.val_dice, e.val_miou, e.lr
        );
    })?;

    let weights = dir.join("best.blu");
    WeightsFile::new(out.best, cfg.train.preprocess).save(&weights)?;
    run.output(&weights);
    let log = dir.join("train_log.csv");
    write_file(&log, out.log.to_csv().as_bytes())?;
    run.output(&log);
    run.finish()?;
    println!(
        "best val dice {:.4} at epoch {}; weights in {}",
        out.log.best_val_dice,
        out.log.best_epoch,
        weights.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let manifest = manifest_at(&a.data)?;
    let seed = a
        .seed
        .or_else(|| manifest.meta_value("seed").and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    let frames = frames_of(&manifest, &a.split, seed)?;
    if frames.is_empty() {
        return Err(CliError::Core(biolite_core::Error::Data(format!(
            "split '{}' has no frames",
            a.split
        ))));
    }

    let preds: Vec<Vec<u8>> = if a.self_test {
        frames.iter().map(|f| f.mask.as_raw().clone()).collect()
    } else {
        let path = a.weights.as_ref().expect("clap requires --weights without --self-test");
        let predictor = Predictor::from(WeightsFile::load(path)?);
        frames
            .par_iter()
            .map(|f| predictor.infer(&f.image).map(|m| m.into_raw()))
            .collect::<std::result::Result<_, _>>()?
    };
    let pairs = || preds.iter().zip(&frames).map(|(p, f)| (p.as_slice(), f.mask.as_raw().as_slice()));
    let report = evaluate(NUM_CLASSES, pairs())?;

    let mut text = format!("split={}\nframes={}\n", a.split, frames.len());
    text.push_str(&report.to_key_value());
    if a.per_image {
        let (miou, dice, acc) = evaluate_per_image(NUM_CLASSES, pairs())?;
        text.push_str(&format!(
            "per_image_miou={miou:.6}\nper_image_dice={dice:.6}\nper_image_pixel_accuracy={acc:.6}\n"
        ));
    }
    print!("{text}");

    let dir = out_dir(a.out.as_deref(), "eval");
    create_dir(&dir)?;
    let model = if a.self_test {
        "self-test".to_string()
    } else {
        a.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    };
    write_file(&dir.join("metrics.txt"), text.as_bytes())?;
    let csv = format!("{}\n{}\n", report.csv_header(), report.csv_row(&model));
    write_file(&dir.join("metrics.csv"), csv.as_bytes())?;
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<()> {
    let mode = if a.explicit_softmax { SoftmaxMode::Explicit } else { SoftmaxMode::Fused };
    let predictor = Predictor::from(WeightsFile::load(&a.weights)?).with_softmax(mode);
    let image = read_rgb(&a.image)?;
    let mask = predictor.infer(&image)?;
    write_mask(&a.out, &mask)?;
    if let Some(p) = &a.overlay {
        write_overlay(p, &mask)?;
    }
    let mut counts = [0u64; NUM_CLASSES];
    for &v in mask.as_raw() {
        counts[usize::from(v)] += 1;
    }
    println!(
        "{}x{} mask written to {} (background {}, bioink {}, nozzle {} px)",
        mask.width(),
        mask.height(),
        a.out.display(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}

pub fn bench(a: BenchArgs, threads: usize) -> Result<()> {
    if a.frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    let predictor = match &a.weights {
        Some(p) => Predictor::from(WeightsFile::load(p)?),
        None => Predictor::new(build(ArchConfig::default(), a.seed)?, Preprocess::default()),
    };
    let images = if a.image.is_empty() {
        generate_dataset(8, Difficulty::Medium, a.seed, 256)?
            .into_iter()
            .map(|f| f.frame.image)
            .collect()
    } else {
        a.image.iter().map(|p| read_rgb(p)).collect::<std::result::Result<Vec<_>, _>>()?
    };
    let dir = out_dir(a.out.as_deref(), "bench");
    create_dir(&dir)?;
    let config = BTreeMap::from([
        ("frames".to_string(), a.frames.to_string()),
        ("warmup".into(), a.warmup.to_string()),
        ("threads".into(), threads.to_string()),
        (
            "weights".into(),
            a.weights.as_ref().map_or("fresh-init".into(), |p| p.display().to_string()),
        ),
    ]);
    let mut run = RunManifest::start(&dir, "bench", a.seed, config)?;
    let (report, _) = benchmark(&predictor, &images, a.frames, a.warmup, threads)?;
    let csv: PathBuf = dir.join("bench.csv");
    write_file(&csv, report.to_csv().as_bytes())?;
    run.output(&csv);
    run.finish()?;
    println!("{}", report.summary());
    print!("{}", report.to_csv());
    Ok(())
}

pub fn describe(a: DescribeArgs) -> Result<()> {
    let arch = if let Some(p) = &a.weights {
        *WeightsFile::load(p)?.params.config()
    } else if let Some(p) = &a.config {
        RunConfig::from_file(p)?.arch
    } else {
        ArchConfig::default()
    };
    if a.size == 0 || a.size % 4 != 0 {
        return Err(CliError::Usage(format!("--size must be a positive multiple of 4, got {}", a.size)));
    }
    let r = complexity(&arch, a.size)?;
    print!("{}", r.table());
    println!();
    print!("{}", r.summary_row());
    if let Some(p) = &a.csv {
        write_file(p, r.to_csv().as_bytes())?;
    }
    Ok(())
}
