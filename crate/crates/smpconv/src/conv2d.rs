//! Direct 2D convolution with same-size zero padding.
//!
//! Follows the usual deep-learning convention: the kernel is applied as a
//! cross-correlation (no flip), and odd extents keep the center tap aligned
//! with the output cell.

use crate::error::{Result, SmpError};
use crate::kernel::KernelTensor;

/// A multichannel raster, `channels x height x width`, row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(SmpError::InvalidParameter(
                "image needs positive channel count and spatial size".into(),
            ));
        }
        if values.len() != channels * height * width {
            return Err(SmpError::ShapeMismatch(format!(
                "image values hold {} floats, {}x{}x{} needs {}",
                values.len(),
                channels,
                height,
                width,
                channels * height * width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.values[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.height * self.width;
        &mut self.values[c * plane..(c + 1) * plane]
    }
}

fn check_kernel_2d(kernel: &KernelTensor) -> Result<(usize, usize)> {
    let extent = kernel.extent();
    if extent.len() != 2 {
        return Err(SmpError::ShapeMismatch(format!(
            "2D convolution needs a 2D kernel, got extent {extent:?}"
        )));
    }
    let (kh, kw) = (extent[0], extent[1]);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(SmpError::InvalidParameter(format!(
            "same-padding convolution needs odd kernel extents, got {kh}x{kw}"
        )));
    }
    Ok((kh, kw))
}

/// Cross-correlate one kernel slab with one input plane, accumulating into
/// `dst`. Out-of-bounds taps read zero.
fn correlate_plane(
    taps: &[f64],
    kh: usize,
    kw: usize,
    src: &[f64],
    height: usize,
    width: usize,
    dst: &mut [f64],
) {
    let (cy, cx) = (kh as isize / 2, kw as isize / 2);
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for dy in 0..kh as isize {
                let sy = y + dy - cy;
                if sy < 0 || sy >= height as isize {
                    continue;
                }
                for dx in 0..kw as isize {
                    let sx = x + dx - cx;
                    if sx < 0 || sx >= width as isize {
                        continue;
                    }
                    acc += taps[(dy * kw as isize + dx) as usize]
                        * src[(sy * width as isize + sx) as usize];
                }
            }
            dst[(y * width as isize + x) as usize] += acc;
        }
    }
}

/// Standard convolution: every output channel sums over all input channels.
pub fn conv2d_direct(kernel: &KernelTensor, input: &Image) -> Result<Image> {
    let (kh, kw) = check_kernel_2d(kernel)?;
    if kernel.in_channels() != input.channels() {
        return Err(SmpError::ShapeMismatch(format!(
            "kernel expects {} input channels, image has {}",
            kernel.in_channels(),
            input.channels()
        )));
    }
    let mut out = Image::zeros(kernel.out_channels(), input.height(), input.width());
    for f in 0..kernel.out_channels() {
        for c in 0..input.channels() {
            correlate_plane(
                kernel.slice(f, c),
                kh,
                kw,
                input.channel(c),
                input.height(),
                input.width(),
                out.channel_mut(f),
            );
        }
    }
    Ok(out)
}

/// Depthwise convolution: kernel output channel c filters input channel c
/// alone. The kernel must have one input channel and as many output channels
/// as the image.
pub fn conv2d_depthwise(kernel: &KernelTensor, input: &Image) -> Result<Image> {
    let (kh, kw) = check_kernel_2d(kernel)?;
    if kernel.in_channels() != 1 || kernel.out_channels() != input.channels() {
        return Err(SmpError::ShapeMismatch(format!(
            "depthwise kernel must be {}x1 spatial slices, got {}x{}",
            input.channels(),
            kernel.out_channels(),
            kernel.in_channels()
        )));
    }
    let mut out = Image::zeros(input.channels(), input.height(), input.width());
    for c in 0..input.channels() {
        correlate_plane(
            kernel.slice(c, 0),
            kh,
            kw,
            input.channel(c),
            input.height(),
            input.width(),
            out.channel_mut(c),
        );
    }
    Ok(out)
}
