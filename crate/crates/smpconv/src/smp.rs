//! Continuous evaluation of a self-moving point set.
//!
//! A filter's points define a vector-valued function over coordinates: each
//! point contributes a cone `g = 1 - |x - p|_1 / r` wherever that cone is
//! strictly positive, and the output is the plain average of the covering
//! contributions `g * w`. A query covered by no point evaluates to the zero
//! vector.

use crate::filter::SmpFilter;

/// L1 cone value `1 - |x - p|_1 / r`. Positive inside the point's reach,
/// zero on the shell, negative beyond (callers filter via [`neighborhood`]).
///
/// Panics if `r <= 0` or the coordinate dimensions disagree.
pub fn distance_g(x: &[f64], p: &[f64], r: f64) -> f64 {
    assert!(r > 0.0, "distance_g requires a positive radius, got {r}");
    assert_eq!(
        x.len(),
        p.len(),
        "distance_g requires matching coordinate dimensions"
    );
    1.0 - l1_distance(x, p) / r
}

pub(crate) fn l1_distance(x: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(p).map(|(a, b)| (a - b).abs()).sum()
}

/// Indices of all points whose cone is strictly positive at `x`, ascending.
pub fn neighborhood(x: &[f64], filter: &SmpFilter) -> Vec<usize> {
    assert_eq!(x.len(), filter.dim(), "query dimension mismatch");
    (0..filter.n_points())
        .filter(|&i| distance_g(x, filter.position(i), filter.radius(i)) > 0.0)
        .collect()
}

/// Evaluate the point set at `x`: the count-normalized sum of `g * w` over
/// the covering points, or the zero vector when nothing covers `x`.
pub fn evaluate_smp(x: &[f64], filter: &SmpFilter) -> Vec<f64> {
    let mut out = vec![0.0; filter.channels()];
    evaluate_smp_into(x, filter, &mut out);
    out
}

/// Single-pass evaluation into a caller-provided buffer (the rasterization
/// hot path). `out` must hold `filter.channels()` slots; it is overwritten.
pub(crate) fn evaluate_smp_into(x: &[f64], filter: &SmpFilter, out: &mut [f64]) {
    debug_assert_eq!(x.len(), filter.dim());
    debug_assert_eq!(out.len(), filter.channels());
    out.fill(0.0);
    let mut covering = 0usize;
    for i in 0..filter.n_points() {
        let r = filter.radius(i);
        let g = 1.0 - l1_distance(x, filter.position(i)) / r;
        if g > 0.0 {
            covering += 1;
            for (o, w) in out.iter_mut().zip(filter.weight(i)) {
                *o += g * w;
            }
        }
    }
    if covering > 1 {
        let inv = 1.0 / covering as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}
