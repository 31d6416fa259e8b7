//! Analytic gradients of the point-set evaluation.
//!
//! For a query x covered by the set N(x), each member i contributes
//! `g_i * w_i / |N(x)|` to the output. Differentiating with the membership
//! count held fixed (it is piecewise constant in the parameters) gives, for
//! upstream cotangent u:
//!
//! - weights:   (g_i / |N|) * u, per channel
//! - positions: (<u, w_i> / |N|) * sign(x_j - p_ij) / r_i, per coordinate
//! - radii:     (<u, w_i> / |N|) * |x - p_i|_1 / r_i^2
//!
//! with sign(0) taken as 0, matching the subgradient convention at the cone
//! apex.

use crate::error::{Result, SmpError};
use crate::filter::{SmpFilter, SmpGradients};
use crate::grid::GridSpec;
use crate::kernel::KernelTensor;

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accumulate the gradient of `<upstream, SMP(x)>` into `grads`.
pub fn smp_backward(
    x: &[f64],
    filter: &SmpFilter,
    upstream: &[f64],
    grads: &mut SmpGradients,
) -> Result<()> {
    if x.len() != filter.dim() {
        return Err(SmpError::ShapeMismatch(format!(
            "query has {} coordinates, filter is {}-dimensional",
            x.len(),
            filter.dim()
        )));
    }
    if upstream.len() != filter.channels() {
        return Err(SmpError::ShapeMismatch(format!(
            "upstream has {} channels, filter has {}",
            upstream.len(),
            filter.channels()
        )));
    }
    if !grads.matches(filter) {
        return Err(SmpError::ShapeMismatch(
            "gradient buffers do not match the filter's shapes".into(),
        ));
    }
    let mut members = Vec::new();
    accumulate(x, filter, upstream, grads, &mut members);
    Ok(())
}

/// Inner accumulation with a caller-owned membership scratch buffer.
/// Entries are `(point, g, l1)` for every strictly covering point.
fn accumulate(
    x: &[f64],
    filter: &SmpFilter,
    upstream: &[f64],
    grads: &mut SmpGradients,
    members: &mut Vec<(usize, f64, f64)>,
) {
    members.clear();
    for i in 0..filter.n_points() {
        let p = filter.position(i);
        let mut l1 = 0.0;
        for (xj, pj) in x.iter().zip(p) {
            l1 += (xj - pj).abs();
        }
        let g = 1.0 - l1 / filter.radius(i);
        if g > 0.0 {
            members.push((i, g, l1));
        }
    }
    if members.is_empty() {
        return;
    }
    let inv = 1.0 / members.len() as f64;
    let dim = filter.dim();
    let channels = filter.channels();
    for &(i, g, l1) in members.iter() {
        let w = filter.weight(i);
        let mut dot = 0.0;
        for (u, wc) in upstream.iter().zip(w) {
            dot += u * wc;
        }
        let scaled_g = g * inv;
        let dw = &mut grads.d_weights[i * channels..(i + 1) * channels];
        for (d, u) in dw.iter_mut().zip(upstream) {
            *d += scaled_g * u;
        }
        let r = filter.radius(i);
        let coeff = dot * inv / r;
        let p = filter.position(i);
        for j in 0..dim {
            grads.d_positions[i * dim + j] += coeff * sign0(x[j] - p[j]);
        }
        grads.d_radii[i] += dot * inv * l1 / (r * r);
    }
}

/// Backpropagate a rasterized kernel's cotangent to the filter parameters.
/// `cotangent` must be a single-output-channel tensor matching the filter's
/// channel count and the grid's extent; every grid cell contributes one
/// query-level backward step.
pub fn rasterize_backward(
    filter: &SmpFilter,
    grid: &GridSpec,
    cotangent: &KernelTensor,
    grads: &mut SmpGradients,
) -> Result<()> {
    if filter.dim() != grid.dim() {
        return Err(SmpError::ShapeMismatch(
            "filter and grid dimensions disagree".into(),
        ));
    }
    if cotangent.out_channels() != 1
        || cotangent.in_channels() != filter.channels()
        || cotangent.extent() != grid.extent()
    {
        return Err(SmpError::ShapeMismatch(format!(
            "cotangent is {}x{}x{:?}, expected 1x{}x{:?}",
            cotangent.out_channels(),
            cotangent.in_channels(),
            cotangent.extent(),
            filter.channels(),
            grid.extent()
        )));
    }
    if !grads.matches(filter) {
        return Err(SmpError::ShapeMismatch(
            "gradient buffers do not match the filter's shapes".into(),
        ));
    }
    let spatial = grid.len();
    let channels = filter.channels();
    let mut x = [0.0; 2];
    let x = &mut x[..grid.dim()];
    let mut upstream = vec![0.0; channels];
    let mut members = Vec::with_capacity(filter.n_points());
    for cell in 0..spatial {
        grid.coord_at(cell, x);
        for (c, u) in upstream.iter_mut().enumerate() {
            *u = cotangent.slice(0, c)[cell];
        }
        accumulate(x, filter, &upstream, grads, &mut members);
    }
    Ok(())
}
