//! Flag/file merging. Every tunable has a library default; a TOML config
//! file can override it, and an explicit flag overrides both. Unknown keys
//! in a config file are usage errors so typos cannot silently fall back to
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use smpconv::experiments::fit::{FitMode, FitOptions};
use smpconv::experiments::sequence::{SequenceModel, SequenceTaskConfig};
use smpconv::experiments::target::TargetKind;
use smpconv::{TrainConfig, RADIUS_MAX, RADIUS_MIN};

use crate::{CliError, FitArgs, ModeArg, ModelArg, SequenceArgs, TargetArg};

pub struct ResolvedFit {
    pub target: TargetKind,
    pub opts: FitOptions,
    pub grid: usize,
    pub out_dir: PathBuf,
}

pub struct ResolvedSequence {
    pub cfg: SequenceTaskConfig,
    pub model: SequenceModel,
    pub out_dir: PathBuf,
}

impl TargetArg {
    fn kind(self) -> TargetKind {
        match self {
            TargetArg::Sinsin => TargetKind::SinSinProduct,
            TargetArg::Chirp => TargetKind::RadialChirp,
        }
    }
}

impl ModeArg {
    fn mode(self) -> FitMode {
        match self {
            ModeArg::Moving => FitMode::Moving,
            ModeArg::Fixed => FitMode::Fixed,
            ModeArg::FixedAll => FitMode::FixedAll,
        }
    }
}

fn target_from_str(s: &str) -> Result<TargetKind, CliError> {
    match s {
        "sinsin" => Ok(TargetKind::SinSinProduct),
        "chirp" => Ok(TargetKind::RadialChirp),
        other => Err(CliError::Usage(format!(
            "unknown target '{other}' (expected sinsin or chirp)"
        ))),
    }
}

fn mode_from_str(s: &str) -> Result<FitMode, CliError> {
    match s {
        "moving" => Ok(FitMode::Moving),
        "fixed" => Ok(FitMode::Fixed),
        "fixed-all" => Ok(FitMode::FixedAll),
        other => Err(CliError::Usage(format!(
            "unknown mode '{other}' (expected moving, fixed, or fixed-all)"
        ))),
    }
}

fn model_from_str(s: &str) -> Result<ModelArg, CliError> {
    match s {
        "smp" => Ok(ModelArg::Smp),
        "dense" => Ok(ModelArg::Dense),
        other => Err(CliError::Usage(format!(
            "unknown model '{other}' (expected smp or dense)"
        ))),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config file {}: {e}", path.display())))
}

fn require(ok: bool, msg: String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(msg))
    }
}

fn check_common(points: usize, sigma: f64, r_init: f64, lr: f64, grid: usize) -> Result<(), CliError> {
    require(points >= 1, format!("--points must be at least 1, got {points}"))?;
    require(
        sigma.is_finite() && sigma > 0.0,
        format!("--sigma must be positive, got {sigma}"),
    )?;
    require(
        (RADIUS_MIN..=RADIUS_MAX).contains(&r_init),
        format!("--r-init must lie in [{RADIUS_MIN}, {RADIUS_MAX}], got {r_init}"),
    )?;
    require(
        lr.is_finite() && lr > 0.0,
        format!("--lr must be positive, got {lr}"),
    )?;
    require(grid >= 2, format!("--grid needs at least 2 samples per axis, got {grid}"))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct FitFile {
    target: Option<String>,
    mode: Option<String>,
    points: Option<usize>,
    sigma: Option<f64>,
    r_init: Option<f64>,
    lr: Option<f64>,
    steps: Option<usize>,
    seed: Option<u64>,
    grid: Option<usize>,
    out_dir: Option<PathBuf>,
}

pub fn resolve_fit(args: FitArgs) -> Result<ResolvedFit, CliError> {
    let file: FitFile = match &args.config {
        Some(path) => read_toml(path)?,
        None => FitFile::default(),
    };
    let defaults = FitOptions::default();

    let target = match (args.target, file.target) {
        (Some(t), _) => t.kind(),
        (None, Some(s)) => target_from_str(&s)?,
        (None, None) => TargetKind::SinSinProduct,
    };
    let mode = match (args.mode, file.mode) {
        (Some(m), _) => m.mode(),
        (None, Some(s)) => mode_from_str(&s)?,
        (None, None) => defaults.mode,
    };
    let points = args.points.or(file.points).unwrap_or(defaults.n_points);
    let sigma = args.sigma.or(file.sigma).unwrap_or(defaults.sigma);
    let r_init = args.r_init.or(file.r_init).unwrap_or(defaults.r_init);
    let lr = args.lr.or(file.lr).unwrap_or(defaults.train.base_lr);
    let steps = args.steps.or(file.steps).unwrap_or(defaults.train.steps);
    let seed = args.seed.or(file.seed).unwrap_or(defaults.train.seed);
    let grid = args.grid.or(file.grid).unwrap_or(51);
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));

    check_common(points, sigma, r_init, lr, grid)?;
    require(steps >= 1, format!("--steps must be at least 1, got {steps}"))?;

    Ok(ResolvedFit {
        target,
        opts: FitOptions {
            mode,
            n_points: points,
            sigma,
            r_init,
            train: TrainConfig {
                base_lr: lr,
                steps,
                seed,
                ..TrainConfig::default()
            },
        },
        grid,
        out_dir,
    })
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SequenceFile {
    model: Option<String>,
    taps: Option<usize>,
    seq_len: Option<usize>,
    n_train: Option<usize>,
    n_test: Option<usize>,
    hidden: Option<usize>,
    points: Option<usize>,
    sigma: Option<f64>,
    r_init: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    seed: Option<u64>,
    shuffle_labels: Option<bool>,
    out_dir: Option<PathBuf>,
}

pub fn resolve_sequence(args: SequenceArgs) -> Result<ResolvedSequence, CliError> {
    let file: SequenceFile = match &args.config {
        Some(path) => read_toml(path)?,
        None => SequenceFile::default(),
    };
    let d = SequenceTaskConfig::default();

    let model_arg = match (args.model, file.model) {
        (Some(m), _) => m,
        (None, Some(s)) => model_from_str(&s)?,
        (None, None) => ModelArg::Smp,
    };
    let taps = args.taps.or(file.taps).unwrap_or(5);
    let cfg = SequenceTaskConfig {
        seq_len: args.seq_len.or(file.seq_len).unwrap_or(d.seq_len),
        n_train: args.n_train.or(file.n_train).unwrap_or(d.n_train),
        n_test: args.n_test.or(file.n_test).unwrap_or(d.n_test),
        hidden: args.hidden.or(file.hidden).unwrap_or(d.hidden),
        n_points: args.points.or(file.points).unwrap_or(d.n_points),
        sigma: args.sigma.or(file.sigma).unwrap_or(d.sigma),
        r_init: args.r_init.or(file.r_init).unwrap_or(d.r_init),
        epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        lr: args.lr.or(file.lr).unwrap_or(d.lr),
        weight_decay: args.weight_decay.or(file.weight_decay).unwrap_or(d.weight_decay),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        shuffle_labels: args.shuffle_labels || file.shuffle_labels.unwrap_or(false),
    };

    require(cfg.seq_len >= 2, format!("--seq-len needs at least 2 samples, got {}", cfg.seq_len))?;
    for (v, name) in [
        (cfg.n_train, "--n-train"),
        (cfg.n_test, "--n-test"),
        (cfg.hidden, "--hidden"),
        (cfg.n_points, "--points"),
        (cfg.epochs, "--epochs"),
        (cfg.batch_size, "--batch-size"),
    ] {
        require(v >= 1, format!("{name} must be at least 1, got {v}"))?;
    }
    require(
        cfg.sigma.is_finite() && cfg.sigma > 0.0,
        format!("--sigma must be positive, got {}", cfg.sigma),
    )?;
    require(
        (RADIUS_MIN..=RADIUS_MAX).contains(&cfg.r_init),
        format!("--r-init must lie in [{RADIUS_MIN}, {RADIUS_MAX}], got {}", cfg.r_init),
    )?;
    require(
        cfg.lr.is_finite() && cfg.lr > 0.0,
        format!("--lr must be positive, got {}", cfg.lr),
    )?;
    require(
        cfg.weight_decay.is_finite() && cfg.weight_decay >= 0.0,
        format!("--weight-decay must be non-negative, got {}", cfg.weight_decay),
    )?;

    let model = match model_arg {
        ModelArg::Smp => SequenceModel::PointSet,
        ModelArg::Dense => {
            require(
                taps >= 1 && taps <= cfg.seq_len,
                format!("--taps must lie in 1..={}, got {taps}", cfg.seq_len),
            )?;
            SequenceModel::Dense { taps }
        }
    };
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(ResolvedSequence { cfg, model, out_dir })
}
