//! Causal 1D convolution, direct and FFT-backed.
//!
//! Kernels follow the grid convention for the domain [-1, 0]: the last
//! spatial cell (index L-1) sits at coordinate 0 and multiplies the current
//! timestep, index L-2 the previous one, and so on. Output t therefore sees
//! input samples t, t-1, ..., max(t-L+1, 0) and nothing later.
//!
//! The FFT path zero-pads to the next power of two at or above T + L - 1,
//! which makes circular convolution agree with linear convolution on the
//! first T lags. Gradients are cross-correlations and reuse the same length.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, SmpError};
use crate::kernel::KernelTensor;

/// A multichannel sequence, `channels x len`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    channels: usize,
    len: usize,
    values: Vec<f64>,
}

impl Sequence {
    pub fn new(channels: usize, len: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || len == 0 {
            return Err(SmpError::InvalidParameter(
                "sequence needs at least one channel and one sample".into(),
            ));
        }
        if values.len() != channels * len {
            return Err(SmpError::ShapeMismatch(format!(
                "sequence values hold {} floats, {}x{} needs {}",
                values.len(),
                channels,
                len,
                channels * len
            )));
        }
        Ok(Self {
            channels,
            len,
            values,
        })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            values: vec![0.0; channels * len],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.len..(c + 1) * self.len]
    }
}

fn check_conv_shapes(kernel: &KernelTensor, input: &Sequence) -> Result<usize> {
    if kernel.extent().len() != 1 {
        return Err(SmpError::ShapeMismatch(format!(
            "causal convolution needs a 1D kernel, got extent {:?}",
            kernel.extent()
        )));
    }
    if kernel.in_channels() != input.channels() {
        return Err(SmpError::ShapeMismatch(format!(
            "kernel expects {} input channels, sequence has {}",
            kernel.in_channels(),
            input.channels()
        )));
    }
    Ok(kernel.extent()[0])
}

/// Direct-sum causal convolution, O(out·in·T·L).
pub fn conv1d_causal_direct(kernel: &KernelTensor, input: &Sequence) -> Result<Sequence> {
    let klen = check_conv_shapes(kernel, input)?;
    let t_len = input.len();
    let mut out = Sequence::zeros(kernel.out_channels(), t_len);
    for f in 0..kernel.out_channels() {
        for c in 0..input.channels() {
            let taps = kernel.slice(f, c);
            let src = input.channel(c);
            let dst = out.channel_mut(f);
            for t in 0..t_len {
                let mut acc = 0.0;
                let max_lag = t.min(klen - 1);
                for lag in 0..=max_lag {
                    // Lag j reads tap index L-1-j.
                    acc += taps[klen - 1 - lag] * src[t - lag];
                }
                dst[t] += acc;
            }
        }
    }
    Ok(out)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

fn ifft_in_place(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

fn padded_spectrum(real: impl Iterator<Item = f64>, fft_len: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    for (slot, v) in buf.iter_mut().zip(real) {
        slot.re = v;
    }
    fft_in_place(&mut buf);
    buf
}

/// Power-of-two length at which circular convolution of a T-sample signal
/// with an L-tap kernel is free of wraparound.
fn conv_fft_len(t_len: usize, klen: usize) -> usize {
    (t_len + klen - 1).next_power_of_two()
}

/// FFT-backed causal convolution; equal to [`conv1d_causal_direct`] up to
/// floating-point roundoff.
pub fn conv1d_causal_fft(kernel: &KernelTensor, input: &Sequence) -> Result<Sequence> {
    let klen = check_conv_shapes(kernel, input)?;
    let t_len = input.len();
    let fft_len = conv_fft_len(t_len, klen);
    let input_spectra: Vec<Vec<Complex<f64>>> = (0..input.channels())
        .map(|c| padded_spectrum(input.channel(c).iter().copied(), fft_len))
        .collect();
    let mut out = Sequence::zeros(kernel.out_channels(), t_len);
    let mut acc = vec![Complex::new(0.0, 0.0); fft_len];
    for f in 0..kernel.out_channels() {
        acc.fill(Complex::new(0.0, 0.0));
        for (c, spectrum) in input_spectra.iter().enumerate() {
            // Taps reversed into lag order so lag 0 is the current timestep.
            let kspec = padded_spectrum(kernel.slice(f, c).iter().rev().copied(), fft_len);
            for ((a, k), s) in acc.iter_mut().zip(&kspec).zip(spectrum) {
                *a += k * s;
            }
        }
        ifft_in_place(&mut acc);
        for (dst, v) in out.channel_mut(f).iter_mut().zip(&acc) {
            *dst = v.re;
        }
    }
    Ok(out)
}

fn check_grad_shapes(
    upstream: &Sequence,
    out_channels: usize,
    t_len: usize,
) -> Result<()> {
    if upstream.channels() != out_channels || upstream.len() != t_len {
        return Err(SmpError::ShapeMismatch(format!(
            "upstream is {}x{}, expected {}x{}",
            upstream.channels(),
            upstream.len(),
            out_channels,
            t_len
        )));
    }
    Ok(())
}

/// Gradient of the convolution output with respect to the kernel taps,
/// returned in the same layout as the kernel itself. Direct-sum reference.
pub fn conv1d_kernel_grad_direct(
    input: &Sequence,
    upstream: &Sequence,
    klen: usize,
    out_channels: usize,
) -> Result<KernelTensor> {
    check_grad_shapes(upstream, out_channels, input.len())?;
    if klen == 0 {
        return Err(SmpError::InvalidParameter("kernel length must be positive".into()));
    }
    let t_len = input.len();
    let mut grad = KernelTensor::zeros(out_channels, input.channels(), vec![klen])?;
    let spatial = klen;
    for f in 0..out_channels {
        let up = upstream.channel(f);
        for c in 0..input.channels() {
            let src = input.channel(c);
            let base = (f * input.channels() + c) * spatial;
            for lag in 0..klen {
                let mut acc = 0.0;
                for t in lag..t_len {
                    acc += up[t] * src[t - lag];
                }
                grad.values_mut()[base + klen - 1 - lag] = acc;
            }
        }
    }
    Ok(grad)
}

/// FFT-backed kernel gradient; cross-correlates upstream with the input.
pub fn conv1d_kernel_grad_fft(
    input: &Sequence,
    upstream: &Sequence,
    klen: usize,
    out_channels: usize,
) -> Result<KernelTensor> {
    check_grad_shapes(upstream, out_channels, input.len())?;
    if klen == 0 {
        return Err(SmpError::InvalidParameter("kernel length must be positive".into()));
    }
    let t_len = input.len();
    let fft_len = conv_fft_len(t_len, klen);
    let input_spectra: Vec<Vec<Complex<f64>>> = (0..input.channels())
        .map(|c| padded_spectrum(input.channel(c).iter().copied(), fft_len))
        .collect();
    let mut grad = KernelTensor::zeros(out_channels, input.channels(), vec![klen])?;
    let mut work = vec![Complex::new(0.0, 0.0); fft_len];
    for f in 0..out_channels {
        let up_spec = padded_spectrum(upstream.channel(f).iter().copied(), fft_len);
        for (c, s_spec) in input_spectra.iter().enumerate() {
            for ((w, u), s) in work.iter_mut().zip(&up_spec).zip(s_spec) {
                *w = u * s.conj();
            }
            ifft_in_place(&mut work);
            let base = (f * input.channels() + c) * klen;
            for (lag, w) in work.iter().take(klen).enumerate() {
                grad.values_mut()[base + klen - 1 - lag] = w.re;
            }
        }
    }
    Ok(grad)
}

/// Gradient with respect to the input sequence. Direct-sum reference.
pub fn conv1d_input_grad_direct(
    kernel: &KernelTensor,
    upstream: &Sequence,
    t_len: usize,
) -> Result<Sequence> {
    let klen = kernel.extent().first().copied().unwrap_or(0);
    if kernel.extent().len() != 1 {
        return Err(SmpError::ShapeMismatch("input gradient needs a 1D kernel".into()));
    }
    check_grad_shapes(upstream, kernel.out_channels(), t_len)?;
    let mut grad = Sequence::zeros(kernel.in_channels(), t_len);
    for f in 0..kernel.out_channels() {
        let up = upstream.channel(f);
        for c in 0..kernel.in_channels() {
            let taps = kernel.slice(f, c);
            let dst = grad.channel_mut(c);
            for t in 0..t_len {
                let mut acc = 0.0;
                let max_lag = (t_len - 1 - t).min(klen - 1);
                for lag in 0..=max_lag {
                    acc += taps[klen - 1 - lag] * up[t + lag];
                }
                dst[t] += acc;
            }
        }
    }
    Ok(grad)
}

/// FFT-backed input gradient; cross-correlates upstream with the kernel.
pub fn conv1d_input_grad_fft(
    kernel: &KernelTensor,
    upstream: &Sequence,
    t_len: usize,
) -> Result<Sequence> {
    if kernel.extent().len() != 1 {
        return Err(SmpError::ShapeMismatch("input gradient needs a 1D kernel".into()));
    }
    let klen = kernel.extent()[0];
    check_grad_shapes(upstream, kernel.out_channels(), t_len)?;
    let fft_len = conv_fft_len(t_len, klen);
    let mut grad = Sequence::zeros(kernel.in_channels(), t_len);
    let mut work = vec![Complex::new(0.0, 0.0); fft_len];
    for f in 0..kernel.out_channels() {
        let up_spec = padded_spectrum(upstream.channel(f).iter().copied(), fft_len);
        for c in 0..kernel.in_channels() {
            let kspec = padded_spectrum(kernel.slice(f, c).iter().rev().copied(), fft_len);
            for ((w, u), k) in work.iter_mut().zip(&up_spec).zip(&kspec) {
                *w = u * k.conj();
            }
            ifft_in_place(&mut work);
            for (dst, v) in grad.channel_mut(c).iter_mut().zip(&work) {
                *dst += v.re;
            }
        }
    }
    Ok(grad)
}
