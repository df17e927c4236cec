use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use fdpl::dataset::{list_pngs, load_corpus, load_training_pair, prepare_corpus};
use fdpl::fdpl::{DiffMatrixAccumulator, DEFAULT_EPSILON};
use fdpl::metrics::{upscale_rgb, Bicubic, EvalSet, Upscaler};
use fdpl::raster::{load_image, save_rgb_image};
use fdpl::srcnn::{load_checkpoint, save_checkpoint, train as run_training};
use fdpl::{DegradeConfig, SrcnnModel, TrainConfig, WeightMatrix};

use crate::config::ConfigFile;
use crate::{usage, DegradeArgs, DiffMatrixArgs, EvalArgs, InputContext, PrepareArgs, SrArgs, TrainArgs};

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing --{flag} (or `{}` in the config file)", flag.replace('-', "_"))))
}

fn existing_dir(path: PathBuf) -> Result<PathBuf> {
    if path.is_dir() {
        Ok(path)
    } else {
        Err(usage(format!("{}: no such directory", path.display())))
    }
}

fn degrade_config(args: &DegradeArgs, cfg: &ConfigFile, base: DegradeConfig) -> Result<DegradeConfig> {
    let out = DegradeConfig {
        scale: cfg.pick_or(args.scale, "scale", base.scale)?,
        blur_sigma: cfg.pick_or(args.blur_sigma, "blur_sigma", base.blur_sigma)?,
        blur_kernel_radius: cfg.pick_or(args.blur_radius, "blur_radius", base.blur_kernel_radius)?,
    };
    out.validate().input()?;
    Ok(out)
}

pub fn prepare(args: PrepareArgs, cfg: &ConfigFile) -> Result<()> {
    let images = existing_dir(required(cfg.pick(args.images, "images")?, "images")?)?;
    let out = required(cfg.pick(args.out, "out")?, "out")?;
    let seed = cfg.pick_or(args.seed, "seed", 0)?;
    let dcfg = degrade_config(&args.degrade, cfg, DegradeConfig::default())?;

    if list_pngs(&images).input()?.is_empty() {
        return Err(usage(format!("{}: no PNG images found", images.display())));
    }
    let report = prepare_corpus(&images, &dcfg, &out, seed).context("preparing corpus")?;
    for (path, reason) in &report.skipped {
        eprintln!("fdpl: warning: skipped {}: {reason}", path.display());
    }
    let sources = report
        .manifest
        .entries
        .iter()
        .map(|e| e.source.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    println!(
        "{} patches from {} images -> {}",
        report.manifest.entries.len(),
        sources,
        report.patch_file.display()
    );
    Ok(())
}

pub fn diff_matrix(args: DiffMatrixArgs, cfg: &ConfigFile) -> Result<()> {
    let images = existing_dir(required(cfg.pick(args.images, "images")?, "images")?)?;
    let out = required(cfg.pick(args.out, "out")?, "out")?;
    let epsilon = cfg.pick_or(args.epsilon, "epsilon", DEFAULT_EPSILON)?;
    let mode = cfg.pick_or(args.mode, "mode", Default::default())?;
    let dcfg = degrade_config(&args.degrade, cfg, DegradeConfig::default())?;

    let files = list_pngs(&images).input()?;
    if files.is_empty() {
        return Err(usage(format!("{}: no PNG images found", images.display())));
    }
    let mut acc = DiffMatrixAccumulator::with_mode(epsilon, mode).input()?;
    // Images are loaded in parallel but folded in file-name order.
    for group in files.chunks(rayon::current_num_threads().max(1) * 2) {
        let pairs: Vec<_> = group
            .par_iter()
            .map(|p| load_training_pair(p, &dcfg))
            .collect::<fdpl::Result<_>>()
            .input()?;
        for (gt, deg) in &pairs {
            acc.add_pair(gt, deg).input()?;
        }
    }
    let stats = acc.finish().input()?;
    stats
        .d
        .save(&out, &stats.header_comments())
        .with_context(|| format!("writing {}", out.display()))?;
    print!("{}", stats.d.to_text(&stats.header_comments()));
    Ok(())
}

pub fn train(args: TrainArgs, cfg: &ConfigFile) -> Result<()> {
    let defaults = TrainConfig::default();
    let loss_kind = cfg.pick_or(args.loss, "loss", defaults.loss_kind)?;
    let tcfg = TrainConfig {
        batch_size: cfg.pick_or(args.batch_size, "batch_size", defaults.batch_size)?,
        max_steps: cfg.pick_or(args.steps, "steps", defaults.max_steps)?,
        loss_kind,
        seed: cfg.pick_or(args.seed, "seed", defaults.seed)?,
        eval_every: cfg.pick_or(args.eval_every, "eval_every", defaults.eval_every)?,
        checkpoint_every: cfg.pick_or(args.checkpoint_every, "checkpoint_every", defaults.checkpoint_every)?,
        reduction: cfg.pick_or(args.reduction, "reduction", defaults.reduction)?,
    };
    tcfg.validate().input()?;
    let corpus_dir = existing_dir(required(cfg.pick(args.corpus, "corpus")?, "corpus")?)?;
    let out = required(cfg.pick(args.out, "out")?, "out")?;

    let diff_path: Option<PathBuf> = cfg.pick(args.diff_matrix, "diff_matrix")?;
    let d = match (&diff_path, loss_kind.needs_diff_matrix()) {
        (None, true) => {
            return Err(usage(format!(
                "--loss {loss_kind} needs a difference matrix; create one with \
                 `fdpl diff-matrix --images DIR --out d.txt` and pass --diff-matrix d.txt"
            )))
        }
        (Some(p), true) => Some(WeightMatrix::load(p).input()?),
        (_, false) => None,
    };
    let loss = loss_kind.build(d.as_ref()).input()?;

    let (manifest, corpus) = load_corpus(&corpus_dir).input()?;
    let eval = match cfg.pick::<PathBuf>(args.eval_dir, "eval_dir")? {
        Some(dir) => {
            let dcfg = degrade_config(&args.degrade, cfg, manifest.config)?;
            Some(EvalSet::from_dir(existing_dir(dir)?, &dcfg).input()?)
        }
        None => None,
    };

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut model = SrcnnModel::new(tcfg.init_seed());
    let log = run_training(&mut model, &corpus, &tcfg, loss.as_ref(), eval.as_ref(), |step, m| {
        save_checkpoint(m, out.join(format!("checkpoint_{step}.srcnn")))
    })
    .context("training")?;

    let metrics = out.join("metrics.csv");
    std::fs::write(&metrics, log.to_csv()).with_context(|| format!("writing {}", metrics.display()))?;
    save_checkpoint(&model, out.join("model.srcnn")).context("saving model")?;

    let last = log.rows.last().expect("at least one step");
    print!(
        "trained {} steps on {} patches with {} loss; final train loss {:.6}",
        last.step,
        corpus.len(),
        loss_kind,
        last.train_loss
    );
    if let Some(p) = last.eval_psnr {
        print!("; eval PSNR {p:.4} dB");
    }
    println!();
    Ok(())
}

pub fn eval(args: EvalArgs, cfg: &ConfigFile) -> Result<()> {
    let set = existing_dir(required(cfg.pick(args.set, "eval_dir")?, "set")?)?;
    let dcfg = degrade_config(&args.degrade, cfg, DegradeConfig::default())?;
    let model: Box<dyn Upscaler> = match &args.checkpoint {
        Some(path) => Box::new(load_checkpoint(path).input()?),
        None => Box::new(Bicubic),
    };
    let report = EvalSet::from_dir(&set, &dcfg).input()?.evaluate(model.as_ref()).context("evaluating")?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn bicubic_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}_bicubic.png"))
}

pub fn sr(args: SrArgs, cfg: &ConfigFile) -> Result<()> {
    let scale = cfg.pick_or(args.scale, "scale", DegradeConfig::default().scale)?;
    if scale == 0 {
        return Err(usage("--scale must be >= 1"));
    }
    let model = load_checkpoint(&args.checkpoint).input()?;
    let image = load_image(&args.input).input()?;
    let restored = upscale_rgb(&model, &image, scale).context("upscaling")?;
    save_rgb_image(&restored, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    println!("{} -> {} ({}x{})", args.input.display(), args.output.display(), restored.width(), restored.height());
    if args.compare {
        let path = bicubic_path(&args.output);
        let plain = upscale_rgb(&Bicubic, &image, scale).context("upscaling")?;
        save_rgb_image(&plain, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("bicubic -> {}", path.display());
    }
    Ok(())
}
