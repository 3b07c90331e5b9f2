use std::fs;
use std::path::{Path, PathBuf};

use rsen::autodiff::OpKind;
use rsen::config::{parse_ratio, KvConfig};
use rsen::data::{
    list_pngs, load_checkpoint, load_checkpoint_for, load_pair_dir, normalize_for_display, read_png, synthesize_rain,
    synthetic_background, write_png, StreakParams,
};
use rsen::gradcheck::{self, GradcheckOptions};
use rsen::metrics::{bench_forward, eval_dir, BenchResult};
use rsen::model::{init_params, ModelConfig, RsenModel, SIZE_MULTIPLE};
use rsen::train::{TrainConfig, Trainer, CHECKPOINT_FILE};

use crate::exit::Failure;
use crate::{BenchArgs, DerainArgs, EvalArgs, GradcheckArgs, SynthArgs, TrainArgs};

/// Parses every known section so that a single file can serve all commands,
/// then rejects keys nothing consumed.
fn load_config(path: &Path) -> Result<(KvConfig, ModelConfig, TrainConfig, StreakParams), Failure> {
    let kv = KvConfig::load(path)?;
    let model = ModelConfig::from_kv(&kv)?;
    let train = TrainConfig::from_kv(&kv)?;
    let rain = StreakParams::from_kv(&kv)?;
    kv.reject_unused()?;
    Ok((kv, model, train, rain))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    let (_, model_cfg, mut cfg, _) = load_config(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("")).to_path_buf();
    let data_dir = cfg
        .data_dir
        .as_deref()
        .map(|p| resolve(&base, p))
        .ok_or_else(|| Failure::usage("train.data_dir is required"))?;
    cfg.data_dir = Some(data_dir.clone());
    cfg.val_dir = cfg.val_dir.as_deref().map(|p| resolve(&base, p));
    let out_dir = resolve(&base, cfg.out_dir.as_deref().unwrap_or(Path::new("run")));
    cfg.out_dir = Some(out_dir.clone());

    let pairs = load_pair_dir(&data_dir)?;
    if pairs.is_empty() {
        return Err(Failure::usage(format!("no image pairs under {}", data_dir.display())));
    }
    let monitor = match &cfg.val_dir {
        Some(dir) => load_pair_dir(dir)?
            .pop()
            .ok_or_else(|| Failure::usage(format!("no image pairs under {}", dir.display())))?,
        None => pairs.last().expect("non-empty").clone(),
    };
    let mut trainer = match &a.resume {
        Some(ck) => Trainer::resume(model_cfg, cfg, ck)?,
        None => Trainer::new(model_cfg, cfg)?,
    };
    log::info!(
        "training on {} pairs from {}, monitoring `{}`, starting at epoch {}",
        pairs.len(),
        data_dir.display(),
        monitor.id,
        trainer.epoch()
    );
    for line in trainer.resolved_config().to_text().lines() {
        log::info!("  {line}");
    }
    let report = trainer.run(&pairs, &monitor)?;
    let last = report.log.last();
    println!(
        "epochs={} iterations={} loss={} val_psnr={} checkpoint={}",
        report.epochs,
        report.iterations,
        last.map_or("n/a".into(), |r| format!("{:.6e}", r.loss)),
        last.map_or("n/a".into(), |r| format!("{:.4}", r.val_psnr)),
        out_dir.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub fn derain(a: &DerainArgs) -> Result<(), Failure> {
    let image = read_png(&a.input)?;
    let ck = match &a.model_config {
        Some(p) => {
            let (_, cfg, _, _) = load_config(p)?;
            load_checkpoint_for(&a.weights, &cfg)?
        }
        None => load_checkpoint(&a.weights)?,
    };
    let model = RsenModel::new(ck.config, ck.params)?;
    let (streaks, derained) = model.derain(&image)?;
    write_png(&a.output, &derained)?;
    if let Some(p) = &a.dump_streaks {
        write_png(p, &normalize_for_display(&streaks))?;
    }
    log::info!("wrote {}", a.output.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let report = eval_dir(&a.pred, &a.gt)?;
    match &a.csv {
        Some(p) => fs::write(p, report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    println!("{}", report.summary());
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<(), Failure> {
    if a.size == 0 || !a.size.is_multiple_of(SIZE_MULTIPLE) {
        return Err(Failure::usage(format!(
            "--size must be a positive multiple of {SIZE_MULTIPLE}, got {}",
            a.size
        )));
    }
    if a.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let model = match &a.weights {
        Some(w) => {
            let ck = load_checkpoint(w)?;
            RsenModel::new(ck.config, ck.params)?
        }
        None => {
            let scale = parse_ratio(&a.scale).map_err(|e| Failure::usage(format!("--scale: {e}")))?;
            let cfg = ModelConfig { channel_scale: scale, ..ModelConfig::default() };
            cfg.validate()?;
            let params = init_params(&cfg, 0);
            RsenModel::new(cfg, params)?
        }
    };
    log::info!("timing {} runs at 1x3x{s}x{s} ({})", a.repeats, model.config(), s = a.size);
    let r = bench_forward(&model, a.size, a.repeats, a.warmup)?;
    println!("{}", BenchResult::CSV_HEADER);
    println!("{}", r.csv_row());
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    let fault = match &a.corrupt {
        None => None,
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| {
            let known: Vec<&str> = OpKind::ALL.iter().map(|k| k.name()).collect();
            Failure::usage(format!("unknown op `{name}`; expected one of {}", known.join(", ")))
        })?),
    };
    let opts = GradcheckOptions {
        channel_scale: parse_ratio(&a.scale).map_err(|e| Failure::usage(format!("--scale: {e}")))?,
        size: a.size,
        seed: a.seed,
        fault,
        ..GradcheckOptions::default()
    };
    let rows = gradcheck::run(&opts)?;
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &rows {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<width$}  {:.3e}  {status}", r.name, r.max_rel_error);
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks below {:e}", rows.len(), gradcheck::THRESHOLD);
        Ok(())
    } else {
        Err(Failure::verify(format!(
            "relative error at or above {:e} in: {}",
            gradcheck::THRESHOLD,
            failed.join(", ")
        )))
    }
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let mut p = match &a.config {
        Some(path) => load_config(path)?.3,
        None => StreakParams::default(),
    };
    p.count = a.count.unwrap_or(p.count);
    p.angle = a.angle.unwrap_or(p.angle);
    p.length = a.length.unwrap_or(p.length);
    p.width = a.width.unwrap_or(p.width);
    p.intensity = a.intensity.unwrap_or(p.intensity);
    p.seed = a.seed.unwrap_or(p.seed);
    p.validate()?;

    let backgrounds: Vec<(String, rsen::Tensor<f32>)> = match &a.clean_dir {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(Failure::usage(format!("directory not found: {}", dir.display())));
            }
            list_pngs(dir)?
                .into_iter()
                .map(|name| Ok((name.clone(), read_png(&dir.join(&name))?)))
                .collect::<Result<_, Failure>>()?
        }
        None => {
            if a.image_size == 0 {
                return Err(Failure::usage("--image-size must be positive"));
            }
            (0..a.generate)
                .map(|i| {
                    let seed = p.seed.wrapping_add(i as u64);
                    (format!("synth_{i:04}.png"), synthetic_background(a.image_size, a.image_size, seed))
                })
                .collect()
        }
    };
    let (rainy_dir, clean_dir) = (a.out_dir.join("rainy"), a.out_dir.join("clean"));
    fs::create_dir_all(&rainy_dir)?;
    fs::create_dir_all(&clean_dir)?;
    for (i, (name, b)) in backgrounds.iter().enumerate() {
        let params = StreakParams { seed: p.seed.wrapping_add(i as u64), ..p.clone() };
        let pair = synthesize_rain(b, &params, name.clone())?;
        write_png(&rainy_dir.join(name), &pair.rainy)?;
        write_png(&clean_dir.join(name), &pair.clean)?;
    }
    println!("wrote {} pairs to {}", backgrounds.len(), a.out_dir.display());
    Ok(())
}
