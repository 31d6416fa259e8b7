//! Synthetic long-range dependency task.
//!
//! Each sequence carries its label in the very first sample: s[0] is +1 or
//! -1 exactly, every later sample is standard Gaussian noise, and the class
//! is the sign of s[0]. A classifier reading the sequence at the last
//! timestep can only beat chance if its receptive field reaches all the way
//! back, which full-length kernels do and small dense kernels cannot.
//!
//! The model is two causal convolution layers (bias + ReLU after each) and a
//! linear readout of the last timestep's features, trained with the logistic
//! loss. The point-set variant rasterizes full-length kernels from 30-point
//! filters; the dense baseline uses short fixed-tap kernels and trains the
//! taps directly. Everything else (loss, schedule, data) is identical.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::backward::rasterize_backward;
use crate::conv1d::{
    conv1d_causal_direct, conv1d_causal_fft, conv1d_input_grad_direct, conv1d_input_grad_fft,
    conv1d_kernel_grad_direct, conv1d_kernel_grad_fft, Sequence,
};
use crate::error::{Result, SmpError};
use crate::filter::{SmpFilter, SmpGradients};
use crate::grid::GridSpec;
use crate::kernel::{rasterize_layer, KernelTensor};
use crate::optim::{init_smp, step, GroupAdam, OptimizerState, TrainConfig};

#[derive(Debug, Clone)]
pub struct SequenceTaskConfig {
    pub seq_len: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Hidden channels in both convolution layers.
    pub hidden: usize,
    /// Points per filter in the point-set variant.
    pub n_points: usize,
    /// Spread of initial point positions over (-1, 0).
    pub sigma: f64,
    pub r_init: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// L2 pull applied to kernel weights in both models (never positions).
    pub weight_decay: f64,
    pub seed: u64,
    /// Sanity control: destroy the labels so accuracy must drop to chance.
    pub shuffle_labels: bool,
}

impl Default for SequenceTaskConfig {
    fn default() -> Self {
        Self {
            seq_len: 256,
            n_train: 1024,
            n_test: 256,
            hidden: 4,
            n_points: 30,
            sigma: 0.5,
            r_init: 0.1,
            epochs: 50,
            batch_size: 32,
            lr: 5e-3,
            weight_decay: 0.0,
            seed: 0,
            shuffle_labels: false,
        }
    }
}

impl SequenceTaskConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            (self.seq_len, "seq_len"),
            (self.n_train, "n_train"),
            (self.n_test, "n_test"),
            (self.hidden, "hidden"),
            (self.n_points, "n_points"),
            (self.epochs, "epochs"),
            (self.batch_size, "batch_size"),
        ];
        for (v, name) in positive {
            if v == 0 {
                return Err(SmpError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.seq_len < 2 {
            return Err(SmpError::InvalidParameter(
                "sequences need at least two samples".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(SmpError::InvalidParameter(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(SmpError::InvalidParameter(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceModel {
    /// Full-length kernels rasterized from point sets.
    PointSet,
    /// Dense causal kernels with this many taps per layer.
    Dense { taps: usize },
}

impl SequenceModel {
    pub fn name(self) -> String {
        match self {
            SequenceModel::PointSet => "smp".into(),
            SequenceModel::Dense { taps } => format!("dense{taps}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub model: String,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
}

impl AccuracyReport {
    pub fn csv_header() -> &'static str {
        "model,seed,train_accuracy,test_accuracy,final_train_loss"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.model, self.seed, self.train_accuracy, self.test_accuracy, self.final_train_loss
        )
    }
}

struct Dataset {
    inputs: Vec<Sequence>,
    /// 1.0 when s[0] = +1, else 0.0 (redrawn at random under shuffle_labels).
    labels: Vec<f64>,
}

fn make_dataset(rng: &mut ChaCha8Rng, n: usize, len: usize, shuffle_labels: bool) -> Dataset {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let positive = rng.random_bool(0.5);
        let mut values = Vec::with_capacity(len);
        values.push(if positive { 1.0 } else { -1.0 });
        values.extend((1..len).map(|_| noise.sample(rng)));
        inputs.push(Sequence::new(1, len, values).expect("shape by construction"));
        labels.push(if positive { 1.0 } else { 0.0 });
    }
    if shuffle_labels {
        for l in &mut labels {
            *l = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        }
    }
    Dataset { inputs, labels }
}

/// Kernels this long go through the FFT path; shorter ones run direct.
const FFT_CUTOVER: usize = 64;

fn conv_auto(kernel: &KernelTensor, input: &Sequence) -> Result<Sequence> {
    if kernel.extent()[0] >= FFT_CUTOVER {
        conv1d_causal_fft(kernel, input)
    } else {
        conv1d_causal_direct(kernel, input)
    }
}

fn kernel_grad_auto(
    input: &Sequence,
    upstream: &Sequence,
    klen: usize,
    out_channels: usize,
) -> Result<KernelTensor> {
    if klen >= FFT_CUTOVER {
        conv1d_kernel_grad_fft(input, upstream, klen, out_channels)
    } else {
        conv1d_kernel_grad_direct(input, upstream, klen, out_channels)
    }
}

fn input_grad_auto(kernel: &KernelTensor, upstream: &Sequence, t_len: usize) -> Result<Sequence> {
    if kernel.extent()[0] >= FFT_CUTOVER {
        conv1d_input_grad_fft(kernel, upstream, t_len)
    } else {
        conv1d_input_grad_direct(kernel, upstream, t_len)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logistic_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Post-activation feature maps kept for the backward pass. ReLU lets the
/// activations double as their own gradient masks.
struct Cache {
    h1: Sequence,
    h2: Sequence,
}

struct Readout {
    bias1: Vec<f64>,
    bias2: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

fn forward(
    k1: &KernelTensor,
    k2: &KernelTensor,
    ro: &Readout,
    input: &Sequence,
) -> Result<(f64, Cache)> {
    let mut h1 = conv_auto(k1, input)?;
    for c in 0..h1.channels() {
        let bias = ro.bias1[c];
        for v in h1.channel_mut(c) {
            *v = (*v + bias).max(0.0);
        }
    }
    let mut h2 = conv_auto(k2, &h1)?;
    for c in 0..h2.channels() {
        let bias = ro.bias2[c];
        for v in h2.channel_mut(c) {
            *v = (*v + bias).max(0.0);
        }
    }
    let t_last = input.len() - 1;
    let mut logit = ro.b;
    for c in 0..h2.channels() {
        logit += ro.w[c] * h2.channel(c)[t_last];
    }
    Ok((logit, Cache { h1, h2 }))
}

struct BatchGrads {
    dk1: Vec<f64>,
    dk2: Vec<f64>,
    dbias1: Vec<f64>,
    dbias2: Vec<f64>,
    dw: Vec<f64>,
    db: f64,
}

impl BatchGrads {
    fn zeros(k1: &KernelTensor, k2: &KernelTensor, hidden: usize) -> Self {
        Self {
            dk1: vec![0.0; k1.values().len()],
            dk2: vec![0.0; k2.values().len()],
            dbias1: vec![0.0; hidden],
            dbias2: vec![0.0; hidden],
            dw: vec![0.0; hidden],
            db: 0.0,
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self
            .dk1
            .iter_mut()
            .chain(&mut self.dk2)
            .chain(&mut self.dbias1)
            .chain(&mut self.dbias2)
            .chain(&mut self.dw)
        {
            *v *= s;
        }
        self.db *= s;
    }
}

fn backward_sample(
    k2: &KernelTensor,
    input: &Sequence,
    cache: &Cache,
    ro: &Readout,
    dlogit: f64,
    acc: &mut BatchGrads,
) -> Result<()> {
    let t_len = input.len();
    let hidden = ro.w.len();
    let t_last = t_len - 1;
    for c in 0..hidden {
        acc.dw[c] += dlogit * cache.h2.channel(c)[t_last];
    }
    acc.db += dlogit;

    // Only the readout timestep feeds the loss, so dz2 is one column.
    let mut dz2 = Sequence::zeros(hidden, t_len);
    for c in 0..hidden {
        if cache.h2.channel(c)[t_last] > 0.0 {
            dz2.channel_mut(c)[t_last] = dlogit * ro.w[c];
        }
    }
    for c in 0..hidden {
        acc.dbias2[c] += dz2.channel(c)[t_last];
    }
    let klen2 = k2.extent()[0];
    let dk2 = kernel_grad_auto(&cache.h1, &dz2, klen2, hidden)?;
    for (a, g) in acc.dk2.iter_mut().zip(dk2.values()) {
        *a += g;
    }

    let mut dz1 = input_grad_auto(k2, &dz2, t_len)?;
    for c in 0..hidden {
        let mask = cache.h1.channel(c).to_vec();
        for (g, m) in dz1.channel_mut(c).iter_mut().zip(&mask) {
            if *m <= 0.0 {
                *g = 0.0;
            }
        }
        acc.dbias1[c] += dz1.channel(c).iter().sum::<f64>();
    }
    let klen1 = acc.dk1.len() / hidden;
    let dk1 = kernel_grad_auto(input, &dz1, klen1, hidden)?;
    for (a, g) in acc.dk1.iter_mut().zip(dk1.values()) {
        *a += g;
    }
    Ok(())
}

/// The trainable convolution stack, point-set or dense.
enum Backbone {
    PointSet {
        /// First `hidden` filters form layer 1, the rest layer 2.
        filters: Vec<SmpFilter>,
        state: OptimizerState,
        train: TrainConfig,
    },
    Dense {
        k1: KernelTensor,
        k2: KernelTensor,
        mk1: GroupAdam,
        mk2: GroupAdam,
    },
}

impl Backbone {
    fn kernels(&self, grid: &GridSpec, hidden: usize) -> Result<(KernelTensor, KernelTensor)> {
        match self {
            Backbone::PointSet { filters, .. } => Ok((
                rasterize_layer(&filters[..hidden], grid)?,
                rasterize_layer(&filters[hidden..], grid)?,
            )),
            Backbone::Dense { k1, k2, .. } => Ok((k1.clone(), k2.clone())),
        }
    }

    fn update(
        &mut self,
        acc: &BatchGrads,
        grid: &GridSpec,
        hidden: usize,
        t: u64,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        match self {
            Backbone::PointSet { filters, state, train } => {
                let t_len = grid.extent()[0];
                let mut grads = Vec::with_capacity(filters.len());
                for (i, f) in filters.iter().enumerate() {
                    let (src, row, channels) = if i < hidden {
                        (&acc.dk1, i, 1)
                    } else {
                        (&acc.dk2, i - hidden, hidden)
                    };
                    let base = row * channels * t_len;
                    let cot = KernelTensor::new(
                        1,
                        channels,
                        vec![t_len],
                        src[base..base + channels * t_len].to_vec(),
                    )?;
                    let mut g = SmpGradients::zeros_like(f);
                    rasterize_backward(f, grid, &cot, &mut g)?;
                    grads.push(g);
                }
                step(filters, &grads, train, state)
            }
            Backbone::Dense { k1, k2, mk1, mk2 } => {
                if acc.dk1.iter().chain(&acc.dk2).any(|v| !v.is_finite()) {
                    return Err(SmpError::NonFiniteGradient {
                        context: "dense sequence model".into(),
                        detail: "a kernel gradient is NaN or infinite".into(),
                    });
                }
                mk1.step(k1.values_mut(), &acc.dk1, t, lr, weight_decay);
                mk2.step(k2.values_mut(), &acc.dk2, t, lr, weight_decay);
                Ok(())
            }
        }
    }
}

fn evaluate(
    k1: &KernelTensor,
    k2: &KernelTensor,
    ro: &Readout,
    data: &Dataset,
) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (input, &label) in data.inputs.iter().zip(&data.labels) {
        let (logit, _) = forward(k1, k2, ro, input)?;
        loss += logistic_loss(logit, label);
        let predicted = if logit > 0.0 { 1.0 } else { 0.0 };
        if predicted == label {
            correct += 1;
        }
    }
    Ok((
        correct as f64 / data.inputs.len() as f64,
        loss / data.inputs.len() as f64,
    ))
}

/// Train one model on the task and report train/test accuracy.
pub fn synth_sequence_task(
    cfg: &SequenceTaskConfig,
    model: SequenceModel,
) -> Result<AccuracyReport> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_seed = master.random::<u64>();
    let test_seed = master.random::<u64>();
    let init_seed = master.random::<u64>();
    let order_seed = master.random::<u64>();

    let train_data = make_dataset(
        &mut ChaCha8Rng::seed_from_u64(train_seed),
        cfg.n_train,
        cfg.seq_len,
        cfg.shuffle_labels,
    );
    let test_data = make_dataset(
        &mut ChaCha8Rng::seed_from_u64(test_seed),
        cfg.n_test,
        cfg.seq_len,
        cfg.shuffle_labels,
    );

    let grid = GridSpec::new_1d(cfg.seq_len, (-1.0, 0.0))?;
    let hidden = cfg.hidden;
    let mut init_rng = ChaCha8Rng::seed_from_u64(init_seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut backbone = match model {
        SequenceModel::PointSet => {
            let mut filters = Vec::with_capacity(2 * hidden);
            for _ in 0..hidden {
                filters.push(init_smp(
                    cfg.n_points,
                    1,
                    1,
                    cfg.sigma,
                    &[(-1.0, 0.0)],
                    cfg.r_init,
                    init_rng.random::<u64>(),
                )?);
            }
            for _ in 0..hidden {
                filters.push(init_smp(
                    cfg.n_points,
                    1,
                    hidden,
                    cfg.sigma,
                    &[(-1.0, 0.0)],
                    cfg.r_init,
                    init_rng.random::<u64>(),
                )?);
            }
            let state = OptimizerState::new(&filters);
            let train = TrainConfig {
                base_lr: cfg.lr,
                weight_decay: cfg.weight_decay,
                seed: cfg.seed,
                ..TrainConfig::default()
            };
            Backbone::PointSet { filters, state, train }
        }
        SequenceModel::Dense { taps } => {
            if taps == 0 || taps > cfg.seq_len {
                return Err(SmpError::InvalidParameter(format!(
                    "dense taps must lie in 1..={}, got {taps}",
                    cfg.seq_len
                )));
            }
            let scale1 = 1.0 / (taps as f64).sqrt();
            let k1 = KernelTensor::new(
                hidden,
                1,
                vec![taps],
                (0..hidden * taps)
                    .map(|_| normal.sample(&mut init_rng) * scale1)
                    .collect(),
            )?;
            let scale2 = 1.0 / (hidden as f64 * taps as f64).sqrt();
            let k2 = KernelTensor::new(
                hidden,
                hidden,
                vec![taps],
                (0..hidden * hidden * taps)
                    .map(|_| normal.sample(&mut init_rng) * scale2)
                    .collect(),
            )?;
            let mk1 = GroupAdam::new(k1.values().len());
            let mk2 = GroupAdam::new(k2.values().len());
            Backbone::Dense { k1, k2, mk1, mk2 }
        }
    };

    let readout_scale = 1.0 / (hidden as f64).sqrt();
    let mut ro = Readout {
        bias1: vec![0.0; hidden],
        bias2: vec![0.0; hidden],
        w: (0..hidden)
            .map(|_| normal.sample(&mut init_rng) * readout_scale)
            .collect(),
        b: 0.0,
    };
    let mut m_bias1 = GroupAdam::new(hidden);
    let mut m_bias2 = GroupAdam::new(hidden);
    let mut m_w = GroupAdam::new(hidden);
    let mut m_b = GroupAdam::new(1);

    let mut order_rng = ChaCha8Rng::seed_from_u64(order_seed);
    let mut order: Vec<usize> = (0..cfg.n_train).collect();
    let mut t_aux = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            let (k1, k2) = backbone.kernels(&grid, hidden)?;
            let mut acc = BatchGrads::zeros(&k1, &k2, hidden);
            for &idx in batch {
                let input = &train_data.inputs[idx];
                let (logit, cache) = forward(&k1, &k2, &ro, input)?;
                if !logit.is_finite() {
                    return Err(SmpError::Diverged(format!(
                        "logit became {logit} during training (model {})",
                        model.name()
                    )));
                }
                let dlogit = sigmoid(logit) - train_data.labels[idx];
                backward_sample(&k2, input, &cache, &ro, dlogit, &mut acc)?;
            }
            acc.scale(1.0 / batch.len() as f64);
            t_aux += 1;
            backbone.update(&acc, &grid, hidden, t_aux, cfg.lr, cfg.weight_decay)?;
            m_bias1.step(&mut ro.bias1, &acc.dbias1, t_aux, cfg.lr, 0.0);
            m_bias2.step(&mut ro.bias2, &acc.dbias2, t_aux, cfg.lr, 0.0);
            m_w.step(&mut ro.w, &acc.dw, t_aux, cfg.lr, 0.0);
            let mut b_slice = [ro.b];
            m_b.step(&mut b_slice, &[acc.db], t_aux, cfg.lr, 0.0);
            ro.b = b_slice[0];
        }
    }

    let (k1, k2) = backbone.kernels(&grid, hidden)?;
    let (train_accuracy, final_train_loss) = evaluate(&k1, &k2, &ro, &train_data)?;
    let (test_accuracy, _) = evaluate(&k1, &k2, &ro, &test_data)?;
    Ok(AccuracyReport {
        model: model.name(),
        seed: cfg.seed,
        train_accuracy,
        test_accuracy,
        final_train_loss,
    })
}
