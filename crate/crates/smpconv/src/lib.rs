//! Convolution kernels built from self-moving point sets.
//!
//! A kernel is stored as a small cloud of learnable points (position, radius,
//! per-channel weights) and rasterized onto a coordinate grid of any
//! resolution on demand. The crate covers the forward evaluation, analytic
//! gradients, gradient-descent training with per-group learning rates,
//! FFT-backed long causal 1D convolution, direct 2D convolution, branch
//! fusion, parameter accounting, and the experiment drivers used by the CLI.

pub mod backward;
pub mod bench;
pub mod checkpoint;
pub mod conv1d;
pub mod conv2d;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod grid;
pub mod kernel;
pub mod layer;
pub mod optim;
pub mod smp;

pub use backward::{rasterize_backward, smp_backward};
pub use bench::{cpu_microbench, default_configs, BenchConfig, BenchKind, BenchReport, BenchRow};
pub use checkpoint::{load_filter, save_filter};
pub use conv1d::{
    conv1d_causal_direct, conv1d_causal_fft, conv1d_input_grad_direct, conv1d_input_grad_fft,
    conv1d_kernel_grad_direct, conv1d_kernel_grad_fft, Sequence,
};
pub use conv2d::{conv2d_depthwise, conv2d_direct, Image};
pub use error::{Result, SmpError};
pub use filter::{SmpFilter, SmpGradients, RADIUS_MAX, RADIUS_MIN};
pub use grid::GridSpec;
pub use kernel::{fuse_branches, rasterize, rasterize_layer, KernelTensor};
pub use layer::{dense_param_count, ConvLayerSpec, PositionSharing};
pub use optim::{
    default_radius, init_smp, step, step_layer, OptimizerKind, OptimizerState, TrainConfig,
};
pub use smp::{distance_g, evaluate_smp, neighborhood};
