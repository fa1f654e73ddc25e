use std::path::{Path, PathBuf};

use anyhow::Context;
use icelut::dataset::{list_images, load_pairs, save_pairs};
use icelut::engine::{self, BenchOptions, EngineError};
use icelut::imaging::{load_image, save_image, ImageU8};
use icelut::lutgen::{self, bundle_storage, export_bundle, import_bundle, LutBundle};
use icelut::metrics::{evaluate, MetricReport};
use icelut::model::{load_checkpoint, save_checkpoint, TrainableModel};
use icelut::synth::{synth_pairs_textured, Transform};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::exit::{BUNDLE, CHECKPOINT, CONFIG, DATASET, OTHER, VERIFY};
use crate::{fail, BakeArgs, BenchArgs, Failure, MetricsArgs, OrExit, RetouchArgs, SynthArgs, TrainArgs, VerifyArgs};

type CmdResult = Result<(), Failure>;

fn print_json(value: &impl Serialize) -> CmdResult {
    println!("{}", serde_json::to_string_pretty(value).or_exit(OTHER)?);
    Ok(())
}

fn open_checkpoint(path: &Path) -> Result<TrainableModel, Failure> {
    load_checkpoint(path)
        .with_context(|| format!("checkpoint {}", path.display()))
        .or_exit(CHECKPOINT)
}

fn open_bundle(path: &Path) -> Result<LutBundle, Failure> {
    import_bundle(path)
        .with_context(|| format!("bundle {}", path.display()))
        .or_exit(BUNDLE)
}

fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, ImageU8)>, Failure> {
    let files = list_images(dir).or_exit(DATASET)?;
    files
        .into_iter()
        .map(|p| {
            let img = load_image(&p).with_context(|| p.display().to_string()).or_exit(DATASET)?;
            Ok((p, img))
        })
        .collect()
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn train(args: &TrainArgs, mut cfg: RunConfig) -> CmdResult {
    let t = &mut cfg.train;
    t.seed = cfg.seed.unwrap_or(t.seed);
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    let m = &mut cfg.model;
    if let Some(v) = args.train_resolution {
        m.train_resolution = v;
    }
    if let Some(v) = &args.hidden {
        m.hidden_widths = v.clone();
    }
    if let Some(v) = args.first_kernel {
        m.first_kernel = v;
    }
    cfg.train.validate().or_exit(CONFIG)?;
    cfg.model.validate().or_exit(CONFIG)?;

    let pairs: Vec<(ImageU8, ImageU8)> = load_pairs(&args.data)
        .or_exit(DATASET)?
        .into_iter()
        .map(|p| (p.input, p.target))
        .collect();
    log::info!(
        "training on {} pairs for {} epochs (seed {})",
        pairs.len(),
        cfg.train.epochs,
        cfg.train.seed
    );
    let outcome = icelut::model::train(&pairs, cfg.model.clone(), &cfg.train).or_exit(OTHER)?;
    save_checkpoint(&outcome.model, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .or_exit(OTHER)?;

    let csv_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))
        .or_exit(OTHER)?;
    w.write_record(["epoch", "l1"]).or_exit(OTHER)?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        w.write_record([epoch.to_string(), format!("{loss:.8}")]).or_exit(OTHER)?;
    }
    w.flush().or_exit(OTHER)?;
    log::info!(
        "{} steps, final l1 {:.5}; wrote {} and {}",
        outcome.steps,
        outcome.loss_history.last().copied().unwrap_or(f64::NAN),
        args.out.display(),
        csv_path.display()
    );
    Ok(())
}

pub fn bake(args: &BakeArgs, mut cfg: RunConfig) -> CmdResult {
    if let Some(v) = args.delta_s {
        cfg.quant.delta_s = v;
    }
    if let Some(v) = args.offset {
        cfg.quant.offset = v;
    }
    cfg.quant.validate().or_exit(CONFIG)?;
    let model = open_checkpoint(&args.checkpoint)?;
    let bundle = lutgen::bake(&model, &cfg.quant).or_exit(CHECKPOINT)?;
    export_bundle(&bundle, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .or_exit(OTHER)?;
    let report = bundle_storage(&bundle);
    if args.json {
        print_json(&report)?;
    } else {
        println!("{report}");
    }
    log::info!("wrote {} (weight scale {:e})", args.out.display(), bundle.weights.scale());
    Ok(())
}

#[derive(Serialize)]
struct MetricRow<'a> {
    name: &'a str,
    psnr: f64,
    ssim: f64,
    delta_e: f64,
}

#[derive(Serialize)]
struct MetricSummary {
    images: usize,
    mean: Option<MetricReport>,
}

fn mean_report(reports: &[MetricReport]) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    Some(MetricReport {
        psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
        ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        delta_e: reports.iter().map(|r| r.delta_e).sum::<f64>() / n,
    })
}

fn write_metrics_csv(path: &Path, rows: &[(String, MetricReport)]) -> CmdResult {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))
        .or_exit(OTHER)?;
    for (name, r) in rows {
        w.serialize(MetricRow {
            name,
            psnr: r.psnr,
            ssim: r.ssim,
            delta_e: r.delta_e,
        })
        .or_exit(OTHER)?;
    }
    w.flush().or_exit(OTHER)
}

#[derive(Serialize)]
struct RetouchSummary {
    processed: usize,
    failed: Vec<String>,
    metrics: Option<MetricSummary>,
}

pub fn retouch(args: &RetouchArgs, cfg: RunConfig) -> CmdResult {
    let working_size = args.working_size.unwrap_or(cfg.working_size());
    if working_size == 0 {
        return fail(CONFIG, "working size must be positive");
    }
    let bundle = open_bundle(&args.bundle)?;
    let files = list_images(&args.input).or_exit(DATASET)?;
    if files.is_empty() {
        return fail(DATASET, format!("no images in {}", args.input.display()));
    }
    if let Some(t) = &args.targets {
        if !t.is_dir() {
            return fail(DATASET, format!("target directory not found: {}", t.display()));
        }
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .or_exit(OTHER)?;

    let results: Vec<(String, anyhow::Result<Option<MetricReport>>)> = files
        .par_iter()
        .map(|path| {
            let name = file_name(path);
            let result = (|| {
                let img = load_image(path)?;
                let out = engine::retouch(&bundle, &img, working_size)?;
                save_image(&out, &args.out.join(&name))?;
                match &args.targets {
                    Some(dir) => {
                        let target = load_image(&dir.join(&name))?;
                        Ok(Some(evaluate(&out, &target)?))
                    }
                    None => Ok(None),
                }
            })();
            (name, result)
        })
        .collect();

    let mut failed = Vec::new();
    let mut rows = Vec::new();
    for (name, result) in results {
        match result {
            Ok(Some(report)) => rows.push((name, report)),
            Ok(None) => {}
            Err(e) => {
                log::error!("{name}: {e:#}");
                failed.push(name);
            }
        }
    }
    let processed = files.len() - failed.len();
    let metrics = if args.targets.is_some() {
        let path = args.metrics_csv.clone().unwrap_or_else(|| args.out.join("metrics.csv"));
        write_metrics_csv(&path, &rows)?;
        let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
        Some(MetricSummary {
            images: reports.len(),
            mean: mean_report(&reports),
        })
    } else {
        None
    };
    print_json(&RetouchSummary {
        processed,
        failed: failed.clone(),
        metrics,
    })?;
    if processed == 0 {
        return fail(DATASET, "every image failed");
    }
    Ok(())
}

pub fn verify(args: &VerifyArgs, cfg: RunConfig) -> CmdResult {
    let working_size = args.working_size.unwrap_or(cfg.working_size());
    let model = open_checkpoint(&args.checkpoint)?;
    let bundle = open_bundle(&args.bundle)?;
    let images: Vec<ImageU8> = load_dir(&args.images)?.into_iter().map(|(_, img)| img).collect();
    if images.is_empty() {
        return fail(CONFIG, format!("no probe images in {}", args.images.display()));
    }
    let report = match engine::verify_equivalence(&model, &bundle, &images, working_size) {
        Ok(r) => r,
        Err(e @ EngineError::DimensionMismatch(_)) => return fail(VERIFY, e),
        Err(e) => return Err(e).or_exit(OTHER),
    };
    print_json(&report)?;
    if !report.within_bounds {
        return fail(
            VERIFY,
            format!(
                "bundle deviates from checkpoint: weight {:.3e} (bound {:.3e}), pixel {}",
                report.max_weight_deviation, report.weight_bound, report.max_pixel_deviation
            ),
        );
    }
    Ok(())
}

pub fn bench(args: &BenchArgs, cfg: RunConfig) -> CmdResult {
    let opts = BenchOptions {
        repeats: args.repeats.unwrap_or(cfg.bench.repeats),
        warmup: args.warmup.unwrap_or(cfg.bench.warmup),
        working_size: args.working_size.unwrap_or(cfg.working_size()),
    };
    if opts.repeats < 3 {
        return fail(CONFIG, format!("--repeats must be at least 3, got {}", opts.repeats));
    }
    if opts.warmup < 1 || opts.working_size == 0 {
        return fail(CONFIG, "--warmup and --working-size must be positive");
    }
    let bundle = open_bundle(&args.bundle)?;
    let images: Vec<ImageU8> = load_dir(&args.images)?.into_iter().map(|(_, img)| img).collect();
    if images.is_empty() {
        return fail(DATASET, format!("no images in {}", args.images.display()));
    }
    let model = args.compare_checkpoint.as_deref().map(open_checkpoint).transpose()?;
    let report = engine::bench(&bundle, &images, &opts, model.as_ref()).map_err(|e| match e {
        EngineError::InvalidBench(_) => Failure { code: CONFIG, error: e.into() },
        other => Failure { code: OTHER, error: other.into() },
    })?;
    if let Some(ratio) = report.speedup {
        log::info!("table weight stage is {ratio:.1}x faster than the network");
    }
    print_json(&report)
}

pub fn metrics(args: &MetricsArgs) -> CmdResult {
    if args.a.is_file() && args.b.is_file() {
        let a = load_image(&args.a).or_exit(DATASET)?;
        let b = load_image(&args.b).or_exit(DATASET)?;
        return print_json(&evaluate(&a, &b).or_exit(DATASET)?);
    }
    let images = load_dir(&args.a)?;
    if !args.b.is_dir() {
        return fail(DATASET, format!("reference directory not found: {}", args.b.display()));
    }
    let mut rows = Vec::with_capacity(images.len());
    for (path, img) in images {
        let name = file_name(&path);
        let reference = load_image(&args.b.join(&name))
            .with_context(|| format!("reference for {name}"))
            .or_exit(DATASET)?;
        let report = evaluate(&img, &reference)
            .with_context(|| name.clone())
            .or_exit(DATASET)?;
        rows.push((name, report));
    }
    if let Some(path) = &args.csv {
        write_metrics_csv(path, &rows)?;
    }
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
    print_json(&MetricSummary {
        images: reports.len(),
        mean: mean_report(&reports),
    })
}

pub fn synth(args: &SynthArgs, cfg: RunConfig) -> CmdResult {
    let s = &cfg.synth;
    let count = args.count.unwrap_or(s.count);
    let size = args.size.unwrap_or(s.size);
    let grain = args.grain.unwrap_or(s.grain);
    let name = args.transform.as_deref().unwrap_or(&s.transform);
    let transform: Transform = name.parse().or_exit(CONFIG)?;
    if count == 0 || size == 0 {
        return fail(CONFIG, "--count and --size must be positive");
    }
    if !(0.0..1.0).contains(&grain) {
        return fail(CONFIG, format!("--grain must lie in [0, 1), got {grain}"));
    }
    let pairs = synth_pairs_textured(count, size, grain, &transform, cfg.seed());
    save_pairs(&args.out, &pairs).or_exit(DATASET)?;
    log::info!("wrote {count} pairs of {size}x{size} ({transform}) to {}", args.out.display());
    Ok(())
}
