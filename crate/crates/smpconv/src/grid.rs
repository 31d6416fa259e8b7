use crate::error::{Result, SmpError};

/// A discretization of a continuous box domain into evenly spaced query
/// coordinates.
///
/// An axis with `extent >= 2` samples both endpoints inclusively; `extent == 1`
/// samples the interval midpoint. 2D grids enumerate coordinates in row-major
/// order (the first axis is the slowest index).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    extent: Vec<usize>,
    domain: Vec<(f64, f64)>,
}

impl GridSpec {
    /// Build a grid over `dim`-dimensional space. `extent` and `domain` must
    /// both have `dim` entries, every extent must be at least 1, and every
    /// interval must be finite with `lo < hi`.
    pub fn new(extent: Vec<usize>, domain: Vec<(f64, f64)>) -> Result<Self> {
        let dim = extent.len();
        if dim == 0 || dim > 2 {
            return Err(SmpError::InvalidParameter(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if domain.len() != dim {
            return Err(SmpError::ShapeMismatch(format!(
                "grid has {dim} extents but {} domain intervals",
                domain.len()
            )));
        }
        for (axis, &n) in extent.iter().enumerate() {
            if n == 0 {
                return Err(SmpError::InvalidParameter(format!(
                    "grid extent along axis {axis} must be >= 1"
                )));
            }
        }
        for (axis, &(lo, hi)) in domain.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(SmpError::InvalidParameter(format!(
                    "grid domain along axis {axis} must be a finite interval with lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(GridSpec {
            dim,
            extent,
            domain,
        })
    }

    pub fn new_1d(extent: usize, domain: (f64, f64)) -> Result<Self> {
        Self::new(vec![extent], vec![domain])
    }

    pub fn new_2d(extent: (usize, usize), domain: ((f64, f64), (f64, f64))) -> Result<Self> {
        Self::new(vec![extent.0, extent.1], vec![domain.0, domain.1])
    }

    /// Square 2D grid of `k`x`k` samples over the same interval on both axes.
    pub fn square(k: usize, domain: (f64, f64)) -> Result<Self> {
        Self::new_2d((k, k), (domain, domain))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// Total number of query coordinates.
    pub fn len(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Continuous coordinate of sample `i` along `axis`.
    ///
    /// Endpoints are returned exactly; interior samples use the dyadic-safe
    /// form `lo + span * (i / (n - 1))` so that grids whose extents share a
    /// power-of-two relationship (e.g. 33 and 65) produce bit-identical
    /// coordinates at shared sample indices.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.domain[axis];
        let n = self.extent[axis];
        debug_assert!(i < n);
        if n == 1 {
            return 0.5 * (lo + hi);
        }
        if i == 0 {
            return lo;
        }
        if i == n - 1 {
            return hi;
        }
        lo + (hi - lo) * (i as f64 / (n - 1) as f64)
    }

    /// All sample coordinates along one axis.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.extent[axis])
            .map(|i| self.axis_coord(axis, i))
            .collect()
    }

    /// Write the coordinate of the row-major flat sample `index` into `out`
    /// (which must hold `dim` slots).
    pub fn coord_at(&self, index: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match self.dim {
            1 => out[0] = self.axis_coord(0, index),
            2 => {
                let cols = self.extent[1];
                out[0] = self.axis_coord(0, index / cols);
                out[1] = self.axis_coord(1, index % cols);
            }
            _ => unreachable!("grid dim validated at construction"),
        }
    }

    /// All query coordinates in row-major order, one `dim`-vector per sample.
    pub fn coords(&self) -> Vec<Vec<f64>> {
        let mut buf = vec![0.0; self.dim];
        (0..self.len())
            .map(|i| {
                self.coord_at(i, &mut buf);
                buf.clone()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = GridSpec::new_1d(51, (-1.0, 0.0)).unwrap();
        let c = g.axis_coords(0);
        assert_eq!(c.len(), 51);
        assert_eq!(c[0], -1.0);
        assert_eq!(c[50], 0.0);
        for w in c.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn extent_one_is_midpoint() {
        let g = GridSpec::new_1d(1, (-1.0, 0.5)).unwrap();
        assert_eq!(g.axis_coord(0, 0), -0.25);
    }

    #[test]
    fn spacing_is_even() {
        let g = GridSpec::new_1d(5, (0.0, 1.0)).unwrap();
        let c = g.axis_coords(0);
        for i in 0..4 {
            assert!((c[i + 1] - c[i] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn power_of_two_refinement_shares_coordinates_exactly() {
        // Samples of a 33-grid appear bit-identically in a 65-grid.
        let coarse = GridSpec::square(33, (-1.0, 1.0)).unwrap();
        let fine = GridSpec::square(65, (-1.0, 1.0)).unwrap();
        for i in 0..33 {
            assert_eq!(coarse.axis_coord(0, i), fine.axis_coord(0, 2 * i));
        }
    }

    #[test]
    fn row_major_enumeration() {
        let g = GridSpec::new_2d((2, 3), ((0.0, 1.0), (0.0, 2.0))).unwrap();
        let coords = g.coords();
        assert_eq!(coords.len(), 6);
        // Second axis varies fastest.
        assert_eq!(coords[0], vec![0.0, 0.0]);
        assert_eq!(coords[1], vec![0.0, 1.0]);
        assert_eq!(coords[2], vec![0.0, 2.0]);
        assert_eq!(coords[3], vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(GridSpec::new_1d(0, (0.0, 1.0)).is_err());
        assert!(GridSpec::new_1d(4, (1.0, 1.0)).is_err());
        assert!(GridSpec::new_1d(4, (2.0, -1.0)).is_err());
        assert!(GridSpec::new(vec![2, 2, 2], vec![(0.0, 1.0); 3]).is_err());
        assert!(GridSpec::new(vec![2, 2], vec![(0.0, 1.0)]).is_err());
    }
}
