//! The five subcommand bodies. Each resolves to library calls, writes its
//! artifacts under the chosen output directory, and echoes the resolved
//! configuration so runs are self-describing.

use std::fs;
use std::path::{Path, PathBuf};

use smpconv::bench::{cpu_microbench, default_configs};
use smpconv::checkpoint::{load_filter, save_filter};
use smpconv::experiments::fit::fit_function;
use smpconv::experiments::sequence::{synth_sequence_task, AccuracyReport};
use smpconv::experiments::target::TargetFunction;
use smpconv::experiments::visualize::export_kernel_image;
use smpconv::{rasterize, GridSpec};

use crate::config::{ResolvedFit, ResolvedSequence};
use crate::{CliError, CliResult};

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Stdout can close mid-run (piping into `head` is routine). Losing a log
/// line is fine; aborting before the artifacts are written is not, so print
/// failures are swallowed instead of panicking like `println!` would.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub fn cmd_fit(r: ResolvedFit) -> CliResult {
    let grid = GridSpec::square(r.grid, (-1.0, 1.0))?;
    let target = TargetFunction::from_kind(r.target, grid)?;
    say!(
        "fit target={} mode={} points={} sigma={} r_init={} lr={} steps={} seed={} grid={}",
        r.target.name(),
        r.opts.mode.name(),
        r.opts.n_points,
        r.opts.sigma,
        r.opts.r_init,
        r.opts.train.base_lr,
        r.opts.train.steps,
        r.opts.train.seed,
        r.grid
    );

    let (report, filter) = fit_function(&target, &r.opts)?;

    create_dir(&r.out_dir)?;
    let stem = format!(
        "fit_{}_{}_seed{}",
        r.target.name(),
        r.opts.mode.name(),
        r.opts.train.seed
    );
    let trace_path = r.out_dir.join(format!("{stem}.csv"));
    write_text(&trace_path, &report.trace_csv())?;
    let ck_path = r.out_dir.join(format!("{stem}.json"));
    save_filter(&filter, (r.opts.train.radius_min, r.opts.train.radius_max), &ck_path)?;

    say!("wrote {}", trace_path.display());
    say!("wrote {}", ck_path.display());
    say!("final mse {:e} after {} steps", report.final_mse, report.mse_trace.len());
    Ok(())
}

pub fn cmd_rasterize(
    checkpoint: PathBuf,
    grid_n: usize,
    out_dir: PathBuf,
    name: Option<String>,
) -> CliResult {
    if grid_n < 2 {
        return Err(CliError::Usage(format!(
            "--grid needs at least 2 samples per axis, got {grid_n}"
        )));
    }
    let (filter, _bounds) = load_filter(&checkpoint)?;
    let grid = if filter.dim() == 1 {
        GridSpec::new_1d(grid_n, (-1.0, 0.0))?
    } else {
        GridSpec::square(grid_n, (-1.0, 1.0))?
    };
    let kernel = rasterize(&filter, &grid)?;

    let mut csv = String::from("channel,cell,value\n");
    for c in 0..filter.channels() {
        for (cell, v) in kernel.slice(0, c).iter().enumerate() {
            csv.push_str(&format!("{c},{cell},{v}\n"));
        }
    }

    create_dir(&out_dir)?;
    let path = out_dir.join(name.unwrap_or_else(|| format!("raster_{grid_n}.csv")));
    write_text(&path, &csv)?;
    say!(
        "rasterized {} ({}d, {} channels) at {} samples per axis",
        checkpoint.display(),
        filter.dim(),
        filter.channels(),
        grid_n
    );
    say!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_bench(
    reps: usize,
    image_size: usize,
    channels: usize,
    parallel: bool,
    out_dir: PathBuf,
) -> CliResult {
    if reps < 3 {
        return Err(CliError::Usage(format!(
            "--reps must be at least 3 for stable percentiles, got {reps}"
        )));
    }
    if image_size < 8 {
        return Err(CliError::Usage(format!(
            "--image-size must be at least 8, got {image_size}"
        )));
    }
    if channels < 1 {
        return Err(CliError::Usage("--channels must be at least 1".into()));
    }

    say!(
        "bench reps={reps} image={channels}x{image_size}x{image_size} threads={}",
        if parallel { "all" } else { "1" }
    );
    let report = cpu_microbench(
        &default_configs(),
        (channels, image_size, image_size),
        reps,
        parallel,
    )?;
    let csv = report.to_csv();
    print!("{csv}");

    create_dir(&out_dir)?;
    let path = out_dir.join("bench.csv");
    write_text(&path, &csv)?;
    say!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_sequence(r: ResolvedSequence) -> CliResult {
    let c = &r.cfg;
    say!(
        "sequence model={} seq_len={} n_train={} n_test={} hidden={} points={} sigma={} r_init={} epochs={} batch_size={} lr={} weight_decay={} seed={} shuffle_labels={}",
        r.model.name(),
        c.seq_len,
        c.n_train,
        c.n_test,
        c.hidden,
        c.n_points,
        c.sigma,
        c.r_init,
        c.epochs,
        c.batch_size,
        c.lr,
        c.weight_decay,
        c.seed,
        c.shuffle_labels
    );

    let report = synth_sequence_task(&r.cfg, r.model)?;

    create_dir(&r.out_dir)?;
    let path = r
        .out_dir
        .join(format!("sequence_{}_seed{}.csv", report.model, report.seed));
    let csv = format!("{}\n{}\n", AccuracyReport::csv_header(), report.csv_row());
    write_text(&path, &csv)?;

    say!(
        "train_accuracy={} test_accuracy={} final_train_loss={}",
        report.train_accuracy, report.test_accuracy, report.final_train_loss
    );
    say!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_visualize(
    checkpoint: PathBuf,
    grid_n: usize,
    out_dir: PathBuf,
    name: String,
) -> CliResult {
    if grid_n < 2 {
        return Err(CliError::Usage(format!(
            "--grid needs at least 2 samples per axis, got {grid_n}"
        )));
    }
    let (filter, _bounds) = load_filter(&checkpoint)?;
    let grid = GridSpec::square(grid_n, (-1.0, 1.0))?;
    create_dir(&out_dir)?;
    let paths = export_kernel_image(&filter, &grid, &out_dir.join(name))?;
    for p in paths {
        say!("wrote {}", p.display());
    }
    Ok(())
}
