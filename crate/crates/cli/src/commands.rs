use std::io::Write;
use std::path::{Path, PathBuf};

use hrge::data::{FeatureDataset, SyntheticMode, SyntheticSpec};
use hrge::gradcheck::{check_gradients, jitter_biases, GradCheckConfig};
use hrge::graph::{Checkpoint, Geometry, HrgeModel, Variant};
use hrge::nn::{LrSchedule, Matrix};
use hrge::retrieval::{
    default_threshold_grid, evaluate_retrieval, render_metrics_table, render_metrics_tsv, render_ranked_tsv,
    sweep_threshold, DescriptorIndex,
};
use hrge::trainer::{evaluate_accuracy, predict_dataset, train_with, Classifier, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{resolve, resolve_opt, ConfigFile, Manifest};
use crate::{
    CliError, Command, EvalArgs, GradcheckArgs, RetrieveArgs, SynthArgs, Threshold, TrainArgs,
};

type CliResult<T = ()> = Result<T, CliError>;

/// Runs one parsed command, writing human-readable progress to `out`.
pub fn run(command: &Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Retrieve(a) => retrieve(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> CliResult {
    out.write_all(text.as_ref().as_bytes())
        .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))
}

fn load_config(path: Option<&PathBuf>, allowed: &[&str]) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let config = ConfigFile::load(path)?;
    config.check_keys(allowed)?;
    Ok(config)
}

fn require_path(path: &Path, flag: &str) -> CliResult {
    if path.as_os_str().is_empty() {
        return Err(CliError::Usage(format!("--{flag} must not be empty")));
    }
    Ok(())
}

fn run_dir(path: &Path) -> CliResult {
    require_path(path, "out")?;
    std::fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: PathBuf, contents: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(&path, contents).map_err(|e| hrge::Error::Io { path, source: e }.into())
}

fn parse_variant(name: &str) -> CliResult<Variant> {
    name.parse()
        .map_err(|_| CliError::Usage(format!("unknown variant {name:?}")))
}

fn load_dataset(path: &Path, flag: &str, fine: bool) -> CliResult<FeatureDataset> {
    require_path(path, flag)?;
    let ds = FeatureDataset::load(path)?;
    Ok(if fine { ds.with_fine_as_coarse()? } else { ds })
}

const SYNTH_KEYS: &[&str] = &[
    "mode", "classes", "per-class", "views", "dim", "noise", "fine-per-class", "seed", "stride", "depth",
];

fn synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult {
    require_path(&a.out, "out")?;
    let c = load_config(a.config.as_ref(), SYNTH_KEYS)?;
    let mode_name = resolve(a.mode.clone(), &c, "mode", "prototype".to_string())?;
    let spec = SyntheticSpec {
        mode: mode_name.parse::<SyntheticMode>()?,
        num_classes: resolve(a.classes, &c, "classes", 4)?,
        per_class: resolve(a.per_class, &c, "per-class", 50)?,
        num_views: resolve(a.views, &c, "views", 12)?,
        dim: resolve(a.dim, &c, "dim", 32)?,
        noise: resolve(a.noise, &c, "noise", 0.1)?,
        fine_per_class: resolve(a.fine_per_class, &c, "fine-per-class", 0)?,
        seed: resolve(a.seed, &c, "seed", 0)?,
    };
    let stride = resolve_opt(a.stride, &c, "stride")?;
    let depth = resolve_opt(a.depth, &c, "depth")?;
    if stride.is_some() || depth.is_some() {
        let stride = stride.unwrap_or(2);
        Geometry {
            num_views: spec.num_views,
            stride,
            depth: depth.unwrap_or_else(|| Geometry::max_depth(spec.num_views, stride)),
            width: spec.dim,
            hidden: spec.dim,
            offset: 0,
        }
        .validate()?;
    }
    let ds = spec.generate()?;
    ds.save(&a.out)?;
    say(
        out,
        format!(
            "wrote {} shapes ({} classes, {} views x {} dims, {}) to {}\n",
            ds.len(),
            ds.num_classes(),
            ds.num_views(),
            ds.dim(),
            spec.mode,
            a.out.display()
        ),
    )
}

const TRAIN_KEYS: &[&str] = &[
    "variant",
    "stride",
    "depth",
    "hidden",
    "offset",
    "epochs",
    "batch-size",
    "lr",
    "decay-factor",
    "decay-period",
    "weight-decay",
    "beta1",
    "beta2",
    "seed",
    "fine",
];

fn train(a: &TrainArgs, out: &mut dyn Write) -> CliResult {
    let c = load_config(a.config.as_ref(), TRAIN_KEYS)?;
    let fine = a.fine || c.get::<bool>("fine")?.unwrap_or(false);
    let ds = load_dataset(&a.data, "data", fine)?;
    let test = a.test.as_deref().map(|p| load_dataset(p, "test", fine)).transpose()?;
    run_dir(&a.out)?;

    let variant = parse_variant(&resolve(a.variant.clone(), &c, "variant", "hrge".to_string())?)?;
    let stride = resolve(a.stride, &c, "stride", 2)?;
    let geometry = Geometry {
        num_views: ds.num_views(),
        stride,
        depth: resolve(a.depth, &c, "depth", Geometry::max_depth(ds.num_views(), stride))?,
        width: ds.dim(),
        hidden: resolve(a.hidden, &c, "hidden", ds.dim())?,
        offset: resolve(a.offset, &c, "offset", 0)?,
    };
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        batch_size: resolve(a.batch_size, &c, "batch-size", defaults.batch_size)?,
        epochs: resolve(a.epochs, &c, "epochs", defaults.epochs)?,
        schedule: LrSchedule {
            initial_lr: resolve(a.lr, &c, "lr", defaults.schedule.initial_lr)?,
            decay_factor: resolve(a.decay_factor, &c, "decay-factor", defaults.schedule.decay_factor)?,
            decay_period: resolve(a.decay_period, &c, "decay-period", defaults.schedule.decay_period)?,
        },
        beta1: resolve(a.beta1, &c, "beta1", defaults.beta1)?,
        beta2: resolve(a.beta2, &c, "beta2", defaults.beta2)?,
        weight_decay: resolve(a.weight_decay, &c, "weight-decay", defaults.weight_decay)?,
        seed: resolve(a.seed, &c, "seed", defaults.seed)?,
        ..defaults
    };
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = HrgeModel::new(geometry, variant, &mut rng)?;
    let mut classifier = Classifier::new(model.descriptor_len(), ds.num_classes(), &mut rng);
    let geometry = *model.geometry();

    let mut manifest = Manifest::new("train");
    manifest
        .push("# data", a.data.display())
        .push("# test", a.test.as_ref().map_or("-".into(), |p| p.display().to_string()))
        .push("variant", variant)
        .push("stride", geometry.stride)
        .push("depth", geometry.depth)
        .push("hidden", geometry.hidden)
        .push("offset", geometry.offset)
        .push("epochs", cfg.epochs)
        .push("batch-size", cfg.batch_size)
        .push("lr", cfg.schedule.initial_lr)
        .push("decay-factor", cfg.schedule.decay_factor)
        .push("decay-period", cfg.schedule.decay_period)
        .push("weight-decay", cfg.weight_decay)
        .push("beta1", cfg.beta1)
        .push("beta2", cfg.beta2)
        .push("seed", cfg.seed)
        .push("fine", fine);
    write_file(a.out.join("manifest.txt"), manifest.render())?;

    say(
        out,
        format!(
            "training {variant} on {} shapes: views {} stride {} depth {} width {} hidden {}\n",
            ds.len(),
            geometry.num_views,
            geometry.stride,
            geometry.depth,
            geometry.width,
            geometry.hidden
        ),
    )?;
    let mut progress = Vec::new();
    let log = train_with(&mut model, &mut classifier, &ds, &cfg, |r| progress.push(format!("{r}\n")));
    for line in &progress {
        say(out, line)?;
    }
    let log = log?;
    write_file(a.out.join("train_log.txt"), log.to_string())?;

    if let Some(test) = &test {
        let acc = evaluate_accuracy(&model, &classifier, test)?;
        write_file(a.out.join("accuracy.txt"), acc.render())?;
        say(out, acc.render())?;
    }
    let ckpt = Checkpoint::new(model, classifier)?;
    ckpt.save(a.out.join("model.ckpt"))?;
    say(out, format!("saved {}\n", a.out.join("model.ckpt").display()))
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult {
    require_path(&a.checkpoint, "checkpoint")?;
    let ds = load_dataset(&a.data, "data", a.fine)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let acc = evaluate_accuracy(&ckpt.model, &ckpt.classifier, &ds)?;
    if let Some(dir) = &a.out {
        run_dir(dir)?;
        write_file(dir.join("accuracy.txt"), acc.render())?;
        let mut m = Manifest::new("eval");
        m.push("# checkpoint", a.checkpoint.display())
            .push("# data", a.data.display())
            .push("fine", a.fine);
        write_file(dir.join("manifest.txt"), m.render())?;
    }
    say(out, acc.render())
}

fn fine_predictions(ckpt: Option<&Checkpoint>, ds: &FeatureDataset) -> CliResult<Option<Vec<usize>>> {
    Ok(match ckpt {
        Some(c) => Some(predict_dataset(&c.model, &c.classifier, ds)?),
        None => None,
    })
}

fn retrieve(a: &RetrieveArgs, out: &mut dyn Write) -> CliResult {
    require_path(&a.checkpoint, "checkpoint")?;
    let c = load_config(a.config.as_ref(), &["threshold"])?;
    let ds = load_dataset(&a.data, "data", false)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let fine_ckpt = a.fine_checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    run_dir(&a.out)?;

    let default = if a.validation.is_some() {
        Threshold::Auto
    } else {
        Threshold::Value(f64::INFINITY)
    };
    let requested = match a.threshold {
        Some(t) => t,
        None => match c.raw("threshold") {
            Some(raw) => raw.parse().map_err(CliError::Usage)?,
            None => default,
        },
    };
    let threshold = match requested {
        Threshold::Value(v) => v,
        Threshold::Auto => {
            let path = a
                .validation
                .as_deref()
                .ok_or_else(|| CliError::Usage("--threshold auto needs --validation".into()))?;
            let val = load_dataset(path, "validation", false)?;
            let index = DescriptorIndex::build(&ckpt.model, &val)?;
            let fine = fine_predictions(fine_ckpt.as_ref(), &val)?;
            let (best, report) = sweep_threshold(&index, fine.as_deref(), &default_threshold_grid())?;
            say(
                out,
                format!("threshold sweep on {}: best {best} (micro F1@N {:.4})\n", path.display(), report.micro.f1),
            )?;
            best
        }
    };

    let index = DescriptorIndex::build(&ckpt.model, &ds)?;
    let fine = fine_predictions(fine_ckpt.as_ref(), &ds)?;
    let run = evaluate_retrieval(&index, threshold, fine.as_deref())?;

    index.save(a.out.join("index.hrgi"))?;
    write_file(a.out.join("metrics.tsv"), render_metrics_tsv(&run.report))?;
    write_file(a.out.join("metrics.txt"), render_metrics_table(&run.report))?;
    write_file(a.out.join("ranked.tsv"), render_ranked_tsv(&run.lists))?;
    let mut m = Manifest::new("retrieve");
    m.push("# checkpoint", a.checkpoint.display())
        .push("# data", a.data.display())
        .push(
            "# fine-checkpoint",
            a.fine_checkpoint.as_ref().map_or("-".into(), |p| p.display().to_string()),
        )
        .push(
            "# validation",
            a.validation.as_ref().map_or("-".into(), |p| p.display().to_string()),
        )
        .push("threshold", threshold);
    write_file(a.out.join("manifest.txt"), m.render())?;

    say(out, format!("threshold {threshold}, re-ranking {}\n", if fine.is_some() { "on" } else { "off" }))?;
    say(out, render_metrics_table(&run.report))
}

const GRADCHECK_KEYS: &[&str] = &[
    "variant", "views", "stride", "depth", "width", "hidden", "classes", "batch", "step", "tolerance", "seed",
];

fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CliResult {
    let c = load_config(a.config.as_ref(), GRADCHECK_KEYS)?;
    let variant = parse_variant(&resolve(a.variant.clone(), &c, "variant", "hrge".to_string())?)?;
    let width = resolve(a.width, &c, "width", 4)?;
    let geometry = Geometry {
        num_views: resolve(a.views, &c, "views", 4)?,
        stride: resolve(a.stride, &c, "stride", 2)?,
        depth: resolve(a.depth, &c, "depth", 1)?,
        width,
        hidden: resolve(a.hidden, &c, "hidden", width)?,
        offset: 0,
    };
    let classes = resolve(a.classes, &c, "classes", 3)?;
    let batch = resolve(a.batch, &c, "batch", 3)?;
    if classes == 0 || batch == 0 {
        return Err(CliError::Usage("--classes and --batch must be positive".into()));
    }
    let defaults = GradCheckConfig::default();
    let cfg = GradCheckConfig {
        step: resolve(a.step, &c, "step", defaults.step)?,
        tolerance: resolve(a.tolerance, &c, "tolerance", defaults.tolerance)?,
        corrupt: a.corrupt,
        ..defaults
    };

    let mut rng = ChaCha8Rng::seed_from_u64(resolve(a.seed, &c, "seed", 0)?);
    let mut model = HrgeModel::new(geometry, variant, &mut rng)?;
    let mut classifier = Classifier::new(model.descriptor_len(), classes, &mut rng);
    jitter_biases(&mut model, &mut classifier, 0.1, &mut rng);
    let n = geometry.num_views;
    let views: Vec<Matrix> = (0..batch)
        .map(|_| Matrix::new(n, width, (0..n * width).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect::<hrge::Result<_>>()?;
    let labels: Vec<usize> = (0..batch).map(|i| i % classes).collect();
    let refs: Vec<&Matrix> = views.iter().collect();
    let report = check_gradients(&mut model, &mut classifier, &refs, &labels, &cfg)?;
    say(out, format!("{report}\n"))?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: worst relative error {:.3e} >= {:.1e}",
            report.worst(),
            report.tolerance
        )))
    }
}
