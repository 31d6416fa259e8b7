//! The release gate: ten numbered checks covering gradient correctness,
//! convolution equivalences, parameter accounting, the two experiments,
//! reproducibility, and degenerate inputs. Every tolerance and runtime
//! budget is pinned here as a constant; run with `-- --nocapture` to see
//! one verdict line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smpconv::experiments::fit::{fit_function, FitMode, FitOptions};
use smpconv::experiments::sequence::{synth_sequence_task, SequenceModel, SequenceTaskConfig};
use smpconv::experiments::target::{TargetFunction, TargetKind};
use smpconv::experiments::visualize::export_kernel_image;
use smpconv::{
    conv1d_causal_direct, conv1d_causal_fft, conv2d_direct, dense_param_count, evaluate_smp,
    fuse_branches, init_smp, load_filter, neighborhood, rasterize, rasterize_layer, save_filter,
    smp_backward, ConvLayerSpec, GridSpec, Image, KernelTensor, PositionSharing, Sequence,
    SmpFilter, SmpGradients, TrainConfig,
};

/// Runs one criterion, prints its verdict line, and re-raises any failure.
/// The line is printed before unwinding so a red run still shows per-check
/// status under `--nocapture`.
fn gate(number: u32, name: &str, budget_secs: Option<f64>, body: impl FnOnce()) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed().as_secs_f64();
    let in_budget = budget_secs.is_none_or(|b| elapsed <= b);
    let verdict = if outcome.is_ok() && in_budget { "PASS" } else { "FAIL" };
    match budget_secs {
        Some(b) => println!("criterion {number:02} {name}: {verdict} ({elapsed:.2}s, budget {b}s)"),
        None => println!("criterion {number:02} {name}: {verdict} ({elapsed:.2}s)"),
    }
    if let Err(cause) = outcome {
        std::panic::resume_unwind(cause);
    }
    assert!(
        in_budget,
        "criterion {number:02} {name}: {elapsed:.2}s exceeds the {:.0}s budget",
        budget_secs.unwrap_or(f64::NAN)
    );
}

fn random_filter(rng: &mut ChaCha8Rng, dim: usize) -> SmpFilter {
    let channels = rng.random_range(1..=3);
    let n_points = rng.random_range(1..=6);
    let positions = (0..n_points * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights = (0..n_points * channels).map(|_| rng.random_range(-2.0..2.0)).collect();
    let radii = (0..n_points).map(|_| rng.random_range(0.15..0.6)).collect();
    SmpFilter::new(dim, channels, positions, weights, radii).expect("valid random filter")
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[1]
}

// --- 1: analytic gradients vs central finite differences ------------------

const FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_ABS_FLOOR: f64 = 1e-7;
const BOUNDARY_MARGIN: f64 = 1e-3;

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// No cone boundary and, for covering points, no L1 kink within the margin:
/// everywhere else the loss is smooth in every parameter, so the central
/// difference is trustworthy.
fn query_is_safe(x: &[f64], filter: &SmpFilter) -> bool {
    for i in 0..filter.n_points() {
        let d = l1(x, filter.position(i));
        let r = filter.radius(i);
        if (d - r).abs() < BOUNDARY_MARGIN {
            return false;
        }
        if d < r && x.iter().zip(filter.position(i)).any(|(xj, pj)| (xj - pj).abs() < BOUNDARY_MARGIN) {
            return false;
        }
    }
    true
}

#[test]
fn criterion_01_gradient_oracle() {
    gate(1, "analytic gradients match finite differences", Some(30.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let loss = |x: &[f64], f: &SmpFilter, up: &[f64]| -> f64 {
            evaluate_smp(x, f).iter().zip(up).map(|(v, u)| v * u).sum()
        };
        let mut triples = 0usize;
        let mut entries = 0usize;
        while triples < 50 {
            let dim = if rng.random_bool(0.5) { 1 } else { 2 };
            let filter = random_filter(&mut rng, dim);
            let grid = if dim == 1 {
                GridSpec::new_1d(rng.random_range(9..=17), (-1.1, 1.1)).unwrap()
            } else {
                GridSpec::square(rng.random_range(5..=9), (-1.1, 1.1)).unwrap()
            };
            let upstream: Vec<f64> = (0..filter.channels())
                .map(|_| rng.random_range(-1.5..1.5))
                .collect();

            let mut x = vec![0.0; dim];
            let mut used = 0usize;
            for cell in 0..grid.len() {
                if used == 3 {
                    break;
                }
                grid.coord_at(cell, &mut x);
                if !query_is_safe(&x, &filter) {
                    continue;
                }
                used += 1;

                let mut grads = SmpGradients::zeros_like(&filter);
                smp_backward(&x, &filter, &upstream, &mut grads).unwrap();

                let fd = |group: usize, slot: usize| -> f64 {
                    let mut plus = filter.clone();
                    let mut minus = filter.clone();
                    {
                        let (p, w, r) = plus.params_mut();
                        [p, w, r][group][slot] += FD_STEP;
                    }
                    {
                        let (p, w, r) = minus.params_mut();
                        [p, w, r][group][slot] -= FD_STEP;
                    }
                    (loss(&x, &plus, &upstream) - loss(&x, &minus, &upstream)) / (2.0 * FD_STEP)
                };
                let groups = [&grads.d_positions, &grads.d_weights, &grads.d_radii];
                for (group, analytic) in groups.iter().enumerate() {
                    for (slot, a) in analytic.iter().enumerate() {
                        let n = fd(group, slot);
                        let tol = f64::max(GRAD_REL_TOL * f64::max(a.abs(), n.abs()), GRAD_ABS_FLOOR);
                        assert!(
                            (a - n).abs() <= tol,
                            "group {group} slot {slot}: analytic {a} vs numeric {n}"
                        );
                        entries += 1;
                    }
                }
            }
            if used > 0 {
                triples += 1;
            }
        }
        assert!(entries > 1000, "exclusions hollowed the check out: {entries} entries");
    });
}

// --- 2: neighborhood vs independent scan -----------------------------------

#[test]
fn criterion_02_neighborhood_oracle() {
    gate(2, "neighborhood matches brute-force scan", Some(5.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut nonempty = 0usize;
        let mut empty = 0usize;
        for _ in 0..1200 {
            let dim = rng.random_range(1..=2);
            let n_points = rng.random_range(1..=12);
            let positions = (0..n_points * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let weights = (0..n_points).map(|_| rng.random_range(-1.0..1.0)).collect();
            let radii: Vec<f64> = (0..n_points).map(|_| rng.random_range(0.05..0.9)).collect();
            let filter = SmpFilter::new(dim, 1, positions, weights, radii).unwrap();
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();

            // Strict inequality: a point whose cone hits exactly zero at x
            // does not cover x.
            let brute: Vec<usize> = (0..n_points)
                .filter(|&i| l1(&x, filter.position(i)) < filter.radius(i))
                .collect();
            assert_eq!(neighborhood(&x, &filter), brute, "query {x:?}");
            if brute.is_empty() {
                empty += 1;
            } else {
                nonempty += 1;
            }

            // The evaluator must agree with a sum over exactly that set.
            let want: f64 = if brute.is_empty() {
                0.0
            } else {
                brute
                    .iter()
                    .map(|&i| {
                        (1.0 - l1(&x, filter.position(i)) / filter.radius(i)) * filter.weight(i)[0]
                    })
                    .sum::<f64>()
                    / brute.len() as f64
            };
            let got = evaluate_smp(&x, &filter)[0];
            assert!((got - want).abs() <= 1e-12, "value {got} vs oracle {want}");
        }
        // Both branches of the membership predicate must see real traffic.
        assert!(nonempty >= 200, "too few covered queries: {nonempty}");
        assert!(empty >= 50, "too few uncovered queries: {empty}");
    });
}

// --- 3: FFT path vs direct path --------------------------------------------

#[test]
fn criterion_03_fft_matches_direct() {
    gate(3, "FFT and direct causal convolutions agree", Some(10.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for klen in [16usize, 64, 256] {
            for _ in 0..10 {
                let in_ch = rng.random_range(1..=3);
                let out_ch = rng.random_range(1..=2);
                let t_len = klen + rng.random_range(0..=klen);
                let kernel = KernelTensor::new(
                    out_ch,
                    in_ch,
                    vec![klen],
                    (0..out_ch * in_ch * klen).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                let signal = Sequence::new(
                    in_ch,
                    t_len,
                    (0..in_ch * t_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                let direct = conv1d_causal_direct(&kernel, &signal).unwrap();
                let fft = conv1d_causal_fft(&kernel, &signal).unwrap();
                let worst = direct
                    .values()
                    .iter()
                    .zip(fft.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(worst <= 1e-8, "klen {klen}, t {t_len}: max abs diff {worst}");
            }
        }
    });
}

// --- 4: branch fusion -------------------------------------------------------

#[test]
fn criterion_04_fusion_equivalence() {
    gate(4, "fused kernel equals the sum of branches", Some(5.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..10 {
            let channels = rng.random_range(1..=3);
            let n_filters = rng.random_range(1..=2);
            let filters: Vec<SmpFilter> = (0..n_filters)
                .map(|_| {
                    let np = rng.random_range(3..=8);
                    let positions =
                        (0..np * 2).map(|_| rng.random_range(-0.9..0.9)).collect();
                    let weights =
                        (0..np * channels).map(|_| rng.random_range(-1.5..1.5)).collect();
                    let radii = (0..np).map(|_| rng.random_range(0.2..0.7)).collect();
                    SmpFilter::new(2, channels, positions, weights, radii).unwrap()
                })
                .collect();
            let grid = GridSpec::square(7, (-1.0, 1.0)).unwrap();
            let large = rasterize_layer(&filters, &grid).unwrap();
            let small = KernelTensor::new(
                n_filters,
                channels,
                vec![3, 3],
                (0..n_filters * channels * 9).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let fused = fuse_branches(&large, &small).unwrap();

            let side = rng.random_range(8..=12);
            let img = Image::new(
                channels,
                side,
                side,
                (0..channels * side * side).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let one_pass = conv2d_direct(&fused, &img).unwrap();
            let a = conv2d_direct(&large, &img).unwrap();
            let b = conv2d_direct(&small, &img).unwrap();
            let worst = one_pass
                .values()
                .iter()
                .zip(a.values().iter().zip(b.values()))
                .map(|(f, (x, y))| (f - (x + y)).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-10, "max abs diff {worst}");
        }
    });
}

// --- 5: parameter accounting ------------------------------------------------

#[test]
fn criterion_05_parameter_formula() {
    gate(5, "parameter count is (1 + d + C) * n_points", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let make = |rng: &mut ChaCha8Rng, dim: usize, channels: usize, np: usize| {
            let positions = (0..np * dim).map(|_| rng.random_range(-0.9..0.0)).collect();
            let weights = (0..np * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
            let radii = (0..np).map(|_| rng.random_range(0.1..0.8)).collect();
            SmpFilter::new(dim, channels, positions, weights, radii).unwrap()
        };

        // 2D image configuration: 16 points, 16 channels per filter.
        let f = make(&mut rng, 2, 16, 16);
        let layer = ConvLayerSpec::standard_2d(vec![f], PositionSharing::Filter, None).unwrap();
        assert_eq!(layer.param_count(), (1 + 2 + 16) * 16);
        assert_eq!(layer.param_count(), 304);

        // Depthwise flavor: one channel per filter, 16 points each.
        let dw: Vec<SmpFilter> = (0..8).map(|_| make(&mut rng, 2, 1, 16)).collect();
        let layer = ConvLayerSpec::depthwise_2d(dw, PositionSharing::Filter, None).unwrap();
        assert_eq!(layer.param_count(), 8 * (1 + 2 + 1) * 16);
        assert_eq!(layer.param_count(), 512);

        // 1D sequence configuration: 30 points, 4 channels.
        let f = make(&mut rng, 1, 4, 30);
        let layer = ConvLayerSpec::causal_1d(vec![f], PositionSharing::Filter, None).unwrap();
        assert_eq!(layer.param_count(), (1 + 1 + 4) * 30);
        assert_eq!(layer.param_count(), 180);

        // The count is kernel-size free, unlike a dense layer's.
        assert!(layer.param_count() < dense_param_count(1, 4, &[256]));
        assert_eq!(dense_param_count(1, 4, &[256]), 1024);
    });
}

// --- 6: function fitting, moving vs frozen positions ------------------------

#[test]
fn criterion_06_fitting_moving_beats_fixed() {
    gate(6, "moving points fit targets better than frozen ones", Some(300.0), || {
        let grid = GridSpec::square(51, (-1.0, 1.0)).unwrap();
        for kind in [TargetKind::SinSinProduct, TargetKind::RadialChirp] {
            let target = TargetFunction::from_kind(kind, grid.clone()).unwrap();
            let mut medians = [0.0f64; 2];
            for (slot, mode) in [FitMode::Moving, FitMode::Fixed].into_iter().enumerate() {
                let mut finals = [0.0f64; 3];
                for seed in 0..3u64 {
                    let opts = FitOptions {
                        mode,
                        train: TrainConfig { seed, ..TrainConfig::default() },
                        ..FitOptions::default()
                    };
                    let (report, _) = fit_function(&target, &opts).unwrap();
                    finals[seed as usize] = report.final_mse;
                }
                medians[slot] = median3(finals);
            }
            let (moving, fixed) = (medians[0], medians[1]);
            assert!(
                moving < fixed,
                "{}: moving {moving} not below fixed {fixed}",
                kind.name()
            );
            assert!(
                moving <= 0.75 * fixed,
                "{}: moving {moving} vs fixed {fixed} misses the 0.75 margin",
                kind.name()
            );
        }
    });
}

// --- 7: long-range dependency -----------------------------------------------

#[test]
fn criterion_07_long_range_sequence_task() {
    gate(7, "full-length kernels solve the first-token task", Some(600.0), || {
        let mut smp = [0.0f64; 3];
        let mut dense = [0.0f64; 3];
        for seed in 0..3u64 {
            let cfg = SequenceTaskConfig { seed, ..SequenceTaskConfig::default() };
            smp[seed as usize] = synth_sequence_task(&cfg, SequenceModel::PointSet)
                .unwrap()
                .test_accuracy;
            dense[seed as usize] = synth_sequence_task(&cfg, SequenceModel::Dense { taps: 5 })
                .unwrap()
                .test_accuracy;
        }
        let (smp_med, dense_med) = (median3(smp), median3(dense));
        assert!(smp_med >= 0.90, "point-set median accuracy {smp_med} below 0.90");
        assert!(dense_med <= 0.60, "5-tap dense median accuracy {dense_med} above 0.60");
    });
}

// --- 8: resolution independence ---------------------------------------------

#[test]
fn criterion_08_resolution_independence() {
    gate(8, "33 and 65 cell rasters agree at shared coordinates", None, || {
        let filter = init_smp(24, 2, 2, 0.6, &[(-1.0, 1.0), (-1.0, 1.0)], 0.3, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_filter(&filter, (1e-4, 1.0), &path).unwrap();
        let (loaded, _) = load_filter(&path).unwrap();

        let coarse = rasterize(&loaded, &GridSpec::square(33, (-1.0, 1.0)).unwrap()).unwrap();
        let fine = rasterize(&loaded, &GridSpec::square(65, (-1.0, 1.0)).unwrap()).unwrap();
        let mut checked = 0usize;
        for c in 0..loaded.channels() {
            let lo = coarse.slice(0, c);
            let hi = fine.slice(0, c);
            for row in 0..33 {
                for col in 0..33 {
                    let a = lo[row * 33 + col];
                    let b = hi[(2 * row) * 65 + 2 * col];
                    let diff = (a - b).abs();
                    let scale = f64::max(a.abs(), b.abs());
                    assert!(
                        diff == 0.0 || diff <= 1e-12 * scale,
                        "cell ({row},{col}) channel {c}: {a} vs {b}"
                    );
                    if a != 0.0 {
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 100, "almost every shared cell was zero: {checked}");
    });
}

// --- 9: byte-identical artifacts --------------------------------------------

#[test]
fn criterion_09_fit_determinism() {
    gate(9, "repeated fit runs write byte-identical CSVs", None, || {
        let dir = tempfile::tempdir().unwrap();
        for out in ["first", "second"] {
            let run = Command::new(env!("CARGO_BIN_EXE_smpconv"))
                .args([
                    "fit", "--steps", "40", "--points", "16", "--seed", "9", "--grid", "21",
                    "--out-dir", out,
                ])
                .current_dir(dir.path())
                .output()
                .unwrap();
            assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        }
        let a = fs::read(dir.path().join("first/fit_sinsin_moving_seed9.csv")).unwrap();
        let b = fs::read(dir.path().join("second/fit_sinsin_moving_seed9.csv")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    });
}

// --- 10: degenerate inputs stay safe -----------------------------------------

#[test]
fn criterion_10_degenerate_safety() {
    gate(10, "uncovered queries, zero kernels, and radius bounds", None, || {
        // Far outside every cone the evaluation is exactly zero.
        let filter = SmpFilter::new(
            2,
            3,
            vec![0.1, -0.2, 0.4, 0.3],
            vec![1.0, -2.0, 0.5, 0.7, 0.0, 3.0],
            vec![0.5, 0.25],
        )
        .unwrap();
        assert_eq!(evaluate_smp(&[7.0, -7.0], &filter), vec![0.0; 3]);
        let far = rasterize(&filter, &GridSpec::square(9, (5.0, 6.0)).unwrap()).unwrap();
        assert!(far.values().iter().all(|&v| v == 0.0));

        // An all-zero-weight kernel exports an all-black image.
        let zero = SmpFilter::new(2, 1, vec![0.0, 0.0], vec![0.0], vec![0.4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.pgm");
        export_kernel_image(&zero, &GridSpec::square(11, (-1.0, 1.0)).unwrap(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n11 11\n255\n";
        assert!(bytes.starts_with(header));
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));

        // Radii stay inside [0.0001, 1.0] across a 1000-step run, under a
        // learning rate high enough to slam into both clips.
        let grid = GridSpec::square(25, (-1.0, 1.0)).unwrap();
        let target = TargetFunction::from_kind(TargetKind::RadialChirp, grid).unwrap();
        let opts = FitOptions {
            n_points: 24,
            train: TrainConfig {
                base_lr: 0.08,
                radius_lr_scale: 1.0,
                steps: 1000,
                seed: 10,
                ..TrainConfig::default()
            },
            ..FitOptions::default()
        };
        let (_, trained) = fit_function(&target, &opts).unwrap();
        assert!(trained
            .radii()
            .iter()
            .all(|&r| (0.0001..=1.0).contains(&r)));
    });
}
