//! Rasterizing point sets onto coordinate grids.
//!
//! The same filter can be sampled at any resolution; kernels rasterized on
//! grids whose coordinates coincide agree exactly at the shared cells.

use rayon::prelude::*;

use crate::error::{Result, SmpError};
use crate::filter::SmpFilter;
use crate::grid::GridSpec;
use crate::smp::evaluate_smp_into;

/// Sampled kernel values, `out_channels x in_channels x spatial`, spatial
/// cells in the row-major order of the grid that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTensor {
    out_channels: usize,
    in_channels: usize,
    extent: Vec<usize>,
    values: Vec<f64>,
}

/// Problem sizes below this many cone evaluations stay on one thread.
const PARALLEL_WORK_THRESHOLD: usize = 1 << 14;

impl KernelTensor {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        extent: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(SmpError::InvalidParameter(
                "kernel needs at least one input and one output channel".into(),
            ));
        }
        if extent.is_empty() || extent.len() > 2 || extent.contains(&0) {
            return Err(SmpError::InvalidParameter(format!(
                "kernel extent must be 1 or 2 positive axis sizes, got {extent:?}"
            )));
        }
        let spatial: usize = extent.iter().product();
        if values.len() != out_channels * in_channels * spatial {
            return Err(SmpError::ShapeMismatch(format!(
                "kernel values hold {} floats, shape {}x{}x{:?} needs {}",
                values.len(),
                out_channels,
                in_channels,
                extent,
                out_channels * in_channels * spatial
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            extent,
            values,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, extent: Vec<usize>) -> Result<Self> {
        let spatial: usize = extent.iter().product();
        let values = vec![0.0; out_channels * in_channels * spatial];
        Self::new(out_channels, in_channels, extent, values)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    pub fn spatial_len(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// One output/input channel pair's spatial slab.
    pub fn slice(&self, out_channel: usize, in_channel: usize) -> &[f64] {
        let s = self.spatial_len();
        let base = (out_channel * self.in_channels + in_channel) * s;
        &self.values[base..base + s]
    }
}

/// Sample one filter on `grid`. The result has a single output channel and
/// one input channel per filter channel.
pub fn rasterize(filter: &SmpFilter, grid: &GridSpec) -> Result<KernelTensor> {
    if filter.dim() != grid.dim() {
        return Err(SmpError::ShapeMismatch(format!(
            "filter is {}-dimensional, grid is {}-dimensional",
            filter.dim(),
            grid.dim()
        )));
    }
    let spatial = grid.len();
    let channels = filter.channels();
    // Cell-major scratch so parallel workers own disjoint chunks; the kernel
    // layout wants channel-major, transposed below.
    let mut scratch = vec![0.0; spatial * channels];
    let work = spatial * filter.n_points();
    if work >= PARALLEL_WORK_THRESHOLD {
        scratch
            .par_chunks_mut(channels)
            .enumerate()
            .for_each(|(cell, out)| {
                let mut x = [0.0; 2];
                let x = &mut x[..grid.dim()];
                grid.coord_at(cell, x);
                evaluate_smp_into(x, filter, out);
            });
    } else {
        let mut x = [0.0; 2];
        let x = &mut x[..grid.dim()];
        for (cell, out) in scratch.chunks_mut(channels).enumerate() {
            grid.coord_at(cell, x);
            evaluate_smp_into(x, filter, out);
        }
    }
    let mut values = vec![0.0; channels * spatial];
    for cell in 0..spatial {
        for c in 0..channels {
            values[c * spatial + cell] = scratch[cell * channels + c];
        }
    }
    KernelTensor::new(1, channels, grid.extent().to_vec(), values)
}

/// Sample a bank of filters on a shared grid, one output channel per filter.
/// All filters must agree on dimension and channel count.
pub fn rasterize_layer(filters: &[SmpFilter], grid: &GridSpec) -> Result<KernelTensor> {
    let first = filters.first().ok_or_else(|| {
        SmpError::InvalidParameter("rasterize_layer needs at least one filter".into())
    })?;
    let (dim, channels) = (first.dim(), first.channels());
    if filters
        .iter()
        .any(|f| f.dim() != dim || f.channels() != channels)
    {
        return Err(SmpError::ShapeMismatch(
            "all filters in a layer must share dimension and channel count".into(),
        ));
    }
    let spatial = grid.len();
    let mut values = Vec::with_capacity(filters.len() * channels * spatial);
    for f in filters {
        values.extend_from_slice(rasterize(f, grid)?.values());
    }
    KernelTensor::new(filters.len(), channels, grid.extent().to_vec(), values)
}

/// Add a smaller kernel into the center of a larger one, returning the sum.
/// Both extents must be odd on every axis so the centers align on a cell;
/// convolving with the result equals the sum of the two branch convolutions.
pub fn fuse_branches(large: &KernelTensor, small: &KernelTensor) -> Result<KernelTensor> {
    if large.out_channels != small.out_channels
        || large.in_channels != small.in_channels
        || large.extent.len() != small.extent.len()
    {
        return Err(SmpError::ShapeMismatch(format!(
            "branches disagree: {}x{}x{:?} vs {}x{}x{:?}",
            large.out_channels,
            large.in_channels,
            large.extent,
            small.out_channels,
            small.in_channels,
            small.extent
        )));
    }
    for (axis, (&l, &s)) in large.extent.iter().zip(&small.extent).enumerate() {
        if l % 2 == 0 || s % 2 == 0 {
            return Err(SmpError::InvalidParameter(format!(
                "fusion needs odd extents on every axis, axis {axis} has {l} and {s}"
            )));
        }
        if s > l {
            return Err(SmpError::InvalidParameter(format!(
                "small branch exceeds large on axis {axis}: {s} > {l}"
            )));
        }
    }
    let offsets: Vec<usize> = large
        .extent
        .iter()
        .zip(&small.extent)
        .map(|(&l, &s)| (l - s) / 2)
        .collect();
    let mut fused = large.clone();
    let large_spatial = large.spatial_len();
    let small_spatial = small.spatial_len();
    for oc in 0..large.out_channels {
        for ic in 0..large.in_channels {
            let slab = (oc * large.in_channels + ic) * large_spatial;
            let small_slab = (oc * small.in_channels + ic) * small_spatial;
            for s_cell in 0..small_spatial {
                let mut l_cell = 0;
                let mut rem = s_cell;
                for (axis, &n) in small.extent.iter().enumerate().rev() {
                    let idx = rem % n;
                    rem /= n;
                    l_cell += (idx + offsets[axis]) * large_stride(&large.extent, axis);
                }
                fused.values[slab + l_cell] += small.values[small_slab + s_cell];
            }
        }
    }
    Ok(fused)
}

/// Row-major stride of `axis` within `extent`.
fn large_stride(extent: &[usize], axis: usize) -> usize {
    extent[axis + 1..].iter().product()
}
