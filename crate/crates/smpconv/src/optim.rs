//! Training: parameter-group updates and point-set initialization.
//!
//! The three parameter groups are treated differently. Weights take the base
//! learning rate and optional L2 decay. Positions take the base rate, no
//! decay, and are never projected (clipping them measurably hurts). Radii
//! take a scaled-down rate, no decay, and are projected into
//! `[radius_min, radius_max]` after every step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmpError};
use crate::filter::{SmpFilter, SmpGradients, RADIUS_MAX, RADIUS_MIN};
use crate::layer::{ConvLayerSpec, PositionSharing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub radius_lr_scale: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-2,
            radius_lr_scale: 0.1,
            radius_min: RADIUS_MIN,
            radius_max: RADIUS_MAX,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            steps: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(SmpError::InvalidParameter(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if !(self.radius_lr_scale > 0.0 && self.radius_lr_scale <= 1.0) {
            return Err(SmpError::InvalidParameter(format!(
                "radius_lr_scale must lie in (0, 1], got {}",
                self.radius_lr_scale
            )));
        }
        if !(self.radius_min > 0.0 && self.radius_min < self.radius_max) {
            return Err(SmpError::InvalidParameter(format!(
                "need 0 < radius_min < radius_max, got {} and {}",
                self.radius_min, self.radius_max
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(SmpError::InvalidParameter(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.steps == 0 {
            return Err(SmpError::InvalidParameter("steps must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter group.
#[derive(Debug, Clone)]
pub(crate) struct GroupAdam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl GroupAdam {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.m.len()
    }

    /// Bias-corrected Adam update; decay is coupled (added to the gradient).
    pub(crate) fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        t: u64,
        lr: f64,
        weight_decay: f64,
    ) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for i in 0..params.len() {
            let g = grads[i] + weight_decay * params[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

pub(crate) fn sgd_group(params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
    debug_assert_eq!(params.len(), grads.len());
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * (g + weight_decay * *p);
    }
}

#[derive(Debug, Clone)]
struct FilterMoments {
    positions: GroupAdam,
    weights: GroupAdam,
    radii: GroupAdam,
}

impl FilterMoments {
    fn new(f: &SmpFilter) -> Self {
        Self {
            positions: GroupAdam::new(f.n_points() * f.dim()),
            weights: GroupAdam::new(f.n_points() * f.channels()),
            radii: GroupAdam::new(f.n_points()),
        }
    }
}

/// Step counter plus Adam moments, one set per filter. SGD runs keep the
/// moments allocated but untouched.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    t: u64,
    filters: Vec<FilterMoments>,
}

impl OptimizerState {
    pub fn new(filters: &[SmpFilter]) -> Self {
        Self {
            t: 0,
            filters: filters.iter().map(FilterMoments::new).collect(),
        }
    }

    /// Completed step count.
    pub fn t(&self) -> u64 {
        self.t
    }

    fn check(&self, filters: &[SmpFilter]) -> Result<()> {
        if self.filters.len() != filters.len()
            || self
                .filters
                .iter()
                .zip(filters)
                .any(|(mom, f)| {
                    mom.positions.len() != f.n_points() * f.dim()
                        || mom.weights.len() != f.n_points() * f.channels()
                        || mom.radii.len() != f.n_points()
                })
        {
            return Err(SmpError::ShapeMismatch(
                "optimizer state was initialized for a different filter set".into(),
            ));
        }
        Ok(())
    }
}

fn check_step_inputs(
    filters: &[SmpFilter],
    grads: &[SmpGradients],
    cfg: &TrainConfig,
    state: &OptimizerState,
) -> Result<()> {
    cfg.validate()?;
    state.check(filters)?;
    if grads.len() != filters.len() {
        return Err(SmpError::ShapeMismatch(format!(
            "{} gradient sets for {} filters",
            grads.len(),
            filters.len()
        )));
    }
    for (i, (f, g)) in filters.iter().zip(grads).enumerate() {
        if !g.matches(f) {
            return Err(SmpError::ShapeMismatch(format!(
                "gradient set {i} does not match its filter's shapes"
            )));
        }
        if !g.is_finite() {
            return Err(SmpError::NonFiniteGradient {
                context: "optimizer step".into(),
                detail: format!("gradient set {i} contains NaN or infinity"),
            });
        }
    }
    Ok(())
}

/// One update of every filter from its gradient set, followed by radius
/// projection. Position sharing is the caller's concern; see [`step_layer`].
pub fn step(
    filters: &mut [SmpFilter],
    grads: &[SmpGradients],
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    check_step_inputs(filters, grads, cfg, state)?;
    state.t += 1;
    let radius_lr = cfg.base_lr * cfg.radius_lr_scale;
    for ((f, g), mom) in filters.iter_mut().zip(grads).zip(&mut state.filters) {
        let (pos, w, r) = f.params_mut();
        match cfg.optimizer {
            OptimizerKind::Sgd => {
                sgd_group(w, &g.d_weights, cfg.base_lr, cfg.weight_decay);
                sgd_group(pos, &g.d_positions, cfg.base_lr, 0.0);
                sgd_group(r, &g.d_radii, radius_lr, 0.0);
            }
            OptimizerKind::Adam => {
                mom.weights
                    .step(w, &g.d_weights, state.t, cfg.base_lr, cfg.weight_decay);
                mom.positions
                    .step(pos, &g.d_positions, state.t, cfg.base_lr, 0.0);
                mom.radii.step(r, &g.d_radii, state.t, radius_lr, 0.0);
            }
        }
        for radius in r.iter_mut() {
            *radius = radius.clamp(cfg.radius_min, cfg.radius_max);
        }
    }
    Ok(())
}

/// Update a whole layer. With layer-level position sharing the position and
/// radius gradients are summed across filters, applied once, and the result
/// copied back into every filter so they stay identical.
pub fn step_layer(
    layer: &mut ConvLayerSpec,
    grads: &[SmpGradients],
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    if layer.position_sharing() == PositionSharing::Filter {
        return step(layer.filters_mut(), grads, cfg, state);
    }
    check_step_inputs(layer.filters(), grads, cfg, state)?;
    state.t += 1;
    let radius_lr = cfg.base_lr * cfg.radius_lr_scale;
    let first = &layer.filters()[0];
    let mut sum_dp = vec![0.0; first.n_points() * first.dim()];
    let mut sum_dr = vec![0.0; first.n_points()];
    for g in grads {
        for (a, b) in sum_dp.iter_mut().zip(&g.d_positions) {
            *a += b;
        }
        for (a, b) in sum_dr.iter_mut().zip(&g.d_radii) {
            *a += b;
        }
    }
    let filters = layer.filters_mut();
    for ((f, g), mom) in filters.iter_mut().zip(grads).zip(&mut state.filters) {
        let (_, w, _) = f.params_mut();
        match cfg.optimizer {
            OptimizerKind::Sgd => sgd_group(w, &g.d_weights, cfg.base_lr, cfg.weight_decay),
            OptimizerKind::Adam => {
                mom.weights
                    .step(w, &g.d_weights, state.t, cfg.base_lr, cfg.weight_decay)
            }
        }
    }
    {
        let mom0 = &mut state.filters[0];
        let (pos, _, r) = filters[0].params_mut();
        match cfg.optimizer {
            OptimizerKind::Sgd => {
                sgd_group(pos, &sum_dp, cfg.base_lr, 0.0);
                sgd_group(r, &sum_dr, radius_lr, 0.0);
            }
            OptimizerKind::Adam => {
                mom0.positions.step(pos, &sum_dp, state.t, cfg.base_lr, 0.0);
                mom0.radii.step(r, &sum_dr, state.t, radius_lr, 0.0);
            }
        }
        for radius in r.iter_mut() {
            *radius = radius.clamp(cfg.radius_min, cfg.radius_max);
        }
    }
    let shared_pos = filters[0].positions().to_vec();
    let shared_r = filters[0].radii().to_vec();
    for f in filters.iter_mut().skip(1) {
        f.set_positions_and_radii(&shared_pos, &shared_r)?;
    }
    Ok(())
}

/// Paper-style starting radius for a kernel spanning `kernel_extent` taps in
/// `dim` dimensions: twice the tap spacing per axis, summed over axes.
pub fn default_radius(kernel_extent: usize, dim: usize) -> f64 {
    (2.0 / kernel_extent as f64) * dim as f64
}

/// How many resamples the truncation loop tolerates before concluding the
/// domain has essentially no Gaussian mass.
const REJECTION_CAP: usize = 100_000;

/// Draw a fresh filter: positions from a zero-mean Gaussian truncated to the
/// open domain box by rejection, radii uniform at `r_init`, weights from
/// N(0, 1)/sqrt(n_points). Identical seeds give identical filters.
pub fn init_smp(
    n_points: usize,
    dim: usize,
    channels: usize,
    sigma: f64,
    domain: &[(f64, f64)],
    r_init: f64,
    seed: u64,
) -> Result<SmpFilter> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(SmpError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(RADIUS_MIN..=RADIUS_MAX).contains(&r_init) {
        return Err(SmpError::InvalidParameter(format!(
            "r_init must lie in [{RADIUS_MIN}, {RADIUS_MAX}], got {r_init}"
        )));
    }
    if domain.len() != dim {
        return Err(SmpError::ShapeMismatch(format!(
            "domain has {} axes for dimension {dim}",
            domain.len()
        )));
    }
    for &(lo, hi) in domain {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(SmpError::InvalidParameter(format!(
                "domain axis ({lo}, {hi}) is not a proper interval"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let position_dist = Normal::new(0.0, sigma).expect("sigma already validated");
    let mut positions = Vec::with_capacity(n_points * dim);
    for _ in 0..n_points {
        for &(lo, hi) in domain {
            let mut attempts = 0;
            let v = loop {
                let v = position_dist.sample(&mut rng);
                if lo < v && v < hi {
                    break v;
                }
                attempts += 1;
                if attempts >= REJECTION_CAP {
                    return Err(SmpError::InvalidParameter(format!(
                        "truncation to ({lo}, {hi}) kept rejecting sigma={sigma} samples"
                    )));
                }
            };
            positions.push(v);
        }
    }
    let scale = 1.0 / (n_points as f64).sqrt();
    let weight_dist = Normal::new(0.0, 1.0).expect("unit normal");
    let weights = (0..n_points * channels)
        .map(|_| weight_dist.sample(&mut rng) * scale)
        .collect();
    SmpFilter::new(dim, channels, positions, weights, vec![r_init; n_points])
}
