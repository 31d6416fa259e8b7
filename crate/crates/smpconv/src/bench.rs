//! CPU timing of the 2D convolution variants on a fixed seeded workload.
//!
//! Each config becomes one CSV row. Timings default to a single rayon
//! thread so repeated runs are comparable; `parallel` opts back into the
//! global thread pool.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::rasterize_backward;
use crate::conv2d::{conv2d_direct, Image};
use crate::error::{Result, SmpError};
use crate::filter::SmpGradients;
use crate::grid::GridSpec;
use crate::kernel::{rasterize_layer, KernelTensor};
use crate::layer::{dense_param_count, ConvLayerSpec, PositionSharing};
use crate::optim::init_smp;

const WORKLOAD_SEED: u64 = 0x5eed;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub name: String,
    pub kind: BenchKind,
}

#[derive(Debug, Clone)]
pub enum BenchKind {
    /// Rasterize a point-set layer at `kernel_extent` and convolve; with
    /// `backward` also push a synthetic kernel cotangent to the parameters.
    Smp {
        n_points: usize,
        kernel_extent: usize,
        backward: bool,
    },
    /// Convolve with a fixed dense kernel of the given extent.
    Dense { kernel_extent: usize },
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub config_name: String,
    pub kernel_extent: usize,
    /// Point count for point-set rows, 0 for dense rows.
    pub n_points: usize,
    pub params: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("config_name,kernel_extent,n_points,params,median_ms,p10_ms,p90_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{:.4}\n",
                r.config_name,
                r.kernel_extent,
                r.n_points,
                r.params,
                r.median_ms,
                r.p10_ms,
                r.p90_ms
            ));
        }
        out
    }
}

/// The config set `bench --configs default` runs: a resolution pair sharing
/// one point budget, a backward-pass row, and dense kernels for contrast.
pub fn default_configs() -> Vec<BenchConfig> {
    let smp = |name: &str, n_points, kernel_extent, backward| BenchConfig {
        name: name.into(),
        kind: BenchKind::Smp {
            n_points,
            kernel_extent,
            backward,
        },
    };
    vec![
        smp("smp_np16_k17", 16, 17, false),
        smp("smp_np16_k33", 16, 33, false),
        smp("smp_np16_k33_bwd", 16, 33, true),
        BenchConfig {
            name: "dense_k5".into(),
            kind: BenchKind::Dense { kernel_extent: 5 },
        },
        BenchConfig {
            name: "dense_k33".into(),
            kind: BenchKind::Dense { kernel_extent: 33 },
        },
    ]
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn random_image(rng: &mut ChaCha8Rng, channels: usize, height: usize, width: usize) -> Image {
    let values = (0..channels * height * width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Image::new(channels, height, width, values).expect("sizes are positive")
}

fn time_reps(repetitions: usize, mut body: impl FnMut()) -> (f64, f64, f64) {
    let mut times: Vec<f64> = (0..repetitions)
        .map(|_| {
            let start = Instant::now();
            body();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(|a, b| a.total_cmp(b));
    (
        percentile(&times, 0.5),
        percentile(&times, 0.1),
        percentile(&times, 0.9),
    )
}

fn run_one(
    config: &BenchConfig,
    input: &Image,
    repetitions: usize,
) -> Result<BenchRow> {
    match config.kind {
        BenchKind::Smp {
            n_points,
            kernel_extent,
            backward,
        } => {
            let channels = input.channels();
            let grid = GridSpec::square(kernel_extent, (-1.0, 1.0))?;
            let mut filters = Vec::with_capacity(channels);
            for f in 0..channels {
                filters.push(init_smp(
                    n_points,
                    2,
                    channels,
                    0.4,
                    &[(-1.0, 1.0), (-1.0, 1.0)],
                    0.3,
                    WORKLOAD_SEED ^ f as u64,
                )?);
            }
            let layer = ConvLayerSpec::standard_2d(filters, PositionSharing::Filter, None)?;
            let params = layer.param_count();
            let cotangents: Vec<KernelTensor> = if backward {
                let mut rng = ChaCha8Rng::seed_from_u64(WORKLOAD_SEED + 1);
                (0..channels)
                    .map(|_| {
                        let values = (0..channels * kernel_extent * kernel_extent)
                            .map(|_| rng.random_range(-1.0..1.0))
                            .collect();
                        KernelTensor::new(1, channels, vec![kernel_extent; 2], values)
                            .expect("shape is consistent")
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let (median_ms, p10_ms, p90_ms) = time_reps(repetitions, || {
                let kernel = rasterize_layer(layer.filters(), &grid).expect("bench shapes");
                let out = conv2d_direct(&kernel, input).expect("bench shapes");
                std::hint::black_box(out.values()[0]);
                if backward {
                    for (f, ct) in layer.filters().iter().zip(&cotangents) {
                        let mut grads = SmpGradients::zeros_like(f);
                        rasterize_backward(f, &grid, ct, &mut grads).expect("bench shapes");
                        std::hint::black_box(grads.d_positions[0]);
                    }
                }
            });
            Ok(BenchRow {
                config_name: config.name.clone(),
                kernel_extent,
                n_points,
                params,
                median_ms,
                p10_ms,
                p90_ms,
            })
        }
        BenchKind::Dense { kernel_extent } => {
            let channels = input.channels();
            let mut rng = ChaCha8Rng::seed_from_u64(WORKLOAD_SEED + 2);
            let values = (0..channels * channels * kernel_extent * kernel_extent)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let kernel =
                KernelTensor::new(channels, channels, vec![kernel_extent; 2], values)?;
            let params = dense_param_count(channels, channels, kernel.extent());
            let (median_ms, p10_ms, p90_ms) = time_reps(repetitions, || {
                let out = conv2d_direct(&kernel, input).expect("bench shapes");
                std::hint::black_box(out.values()[0]);
            });
            Ok(BenchRow {
                config_name: config.name.clone(),
                kernel_extent,
                n_points: 0,
                params,
                median_ms,
                p10_ms,
                p90_ms,
            })
        }
    }
}

/// Time every config on one shared seeded image of the given shape.
pub fn cpu_microbench(
    configs: &[BenchConfig],
    input_shape: (usize, usize, usize),
    repetitions: usize,
    parallel: bool,
) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(SmpError::InvalidParameter(format!(
            "timings need at least 3 repetitions, got {repetitions}"
        )));
    }
    let (channels, height, width) = input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(WORKLOAD_SEED);
    let input = random_image(&mut rng, channels, height, width);
    let run_all = || -> Result<Vec<BenchRow>> {
        configs
            .iter()
            .map(|c| run_one(c, &input, repetitions))
            .collect()
    };
    let rows = if parallel {
        run_all()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| SmpError::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(run_all)?
    };
    Ok(BenchReport { rows })
}
