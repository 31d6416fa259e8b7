use crate::error::{Result, SmpError};

/// Default lower clip bound for point radii.
pub const RADIUS_MIN: f64 = 1e-4;
/// Default upper clip bound for point radii.
pub const RADIUS_MAX: f64 = 1.0;

/// One filter's learnable point set: positions, per-channel weights and radii.
///
/// Positions are unconstrained (points may leave the nominal kernel domain);
/// radii must stay positive and are clipped into `[radius_min, radius_max]`
/// by the optimizer after each update.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpFilter {
    dim: usize,
    channels: usize,
    n_points: usize,
    positions: Vec<f64>, // n_points x dim, row-major
    weights: Vec<f64>,   // n_points x channels, row-major
    radii: Vec<f64>,     // n_points
}

impl SmpFilter {
    /// Assemble a filter from flat parameter arrays.
    ///
    /// `positions` holds `n_points * dim` values, `weights` holds
    /// `n_points * channels`, `radii` holds `n_points` strictly positive
    /// entries. All values must be finite.
    pub fn new(
        dim: usize,
        channels: usize,
        positions: Vec<f64>,
        weights: Vec<f64>,
        radii: Vec<f64>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(SmpError::InvalidParameter(format!(
                "filter dimension must be 1 or 2, got {dim}"
            )));
        }
        if channels == 0 {
            return Err(SmpError::InvalidParameter(
                "filter must have at least one channel".into(),
            ));
        }
        let n_points = radii.len();
        if n_points == 0 {
            return Err(SmpError::InvalidParameter(
                "filter must have at least one point".into(),
            ));
        }
        if positions.len() != n_points * dim {
            return Err(SmpError::ShapeMismatch(format!(
                "expected {} position values ({} points x {} dims), got {}",
                n_points * dim,
                n_points,
                dim,
                positions.len()
            )));
        }
        if weights.len() != n_points * channels {
            return Err(SmpError::ShapeMismatch(format!(
                "expected {} weight values ({} points x {} channels), got {}",
                n_points * channels,
                n_points,
                channels,
                weights.len()
            )));
        }
        if let Some(bad) = positions.iter().chain(weights.iter()).find(|v| !v.is_finite()) {
            return Err(SmpError::InvalidParameter(format!(
                "non-finite parameter value {bad}"
            )));
        }
        for (i, &r) in radii.iter().enumerate() {
            if !r.is_finite() || r <= 0.0 {
                return Err(SmpError::InvalidParameter(format!(
                    "radius {i} must be positive and finite, got {r}"
                )));
            }
        }
        Ok(SmpFilter {
            dim,
            channels,
            n_points,
            positions,
            weights,
            radii,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Coordinate vector of point `i`.
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Weight vector (one value per channel) of point `i`.
    pub fn weight(&self, i: usize) -> &[f64] {
        &self.weights[i * self.channels..(i + 1) * self.channels]
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.radii[i]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Mutable parameter views for the optimizer. Callers must keep radii
    /// positive; the optimizer re-projects after every update.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.positions, &mut self.weights, &mut self.radii)
    }

    /// Replace positions and radii wholesale (used to keep layer-shared
    /// filters identical). Shapes must match.
    pub fn set_positions_and_radii(&mut self, positions: &[f64], radii: &[f64]) -> Result<()> {
        if positions.len() != self.positions.len() || radii.len() != self.radii.len() {
            return Err(SmpError::ShapeMismatch(
                "shared position/radius arrays have wrong length".into(),
            ));
        }
        self.positions.copy_from_slice(positions);
        self.radii.copy_from_slice(radii);
        Ok(())
    }
}

/// Cotangent accumulators matching an [`SmpFilter`]'s parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpGradients {
    pub d_positions: Vec<f64>,
    pub d_weights: Vec<f64>,
    pub d_radii: Vec<f64>,
}

impl SmpGradients {
    pub fn zeros_like(filter: &SmpFilter) -> Self {
        SmpGradients {
            d_positions: vec![0.0; filter.positions.len()],
            d_weights: vec![0.0; filter.weights.len()],
            d_radii: vec![0.0; filter.radii.len()],
        }
    }

    pub fn matches(&self, filter: &SmpFilter) -> bool {
        self.d_positions.len() == filter.positions.len()
            && self.d_weights.len() == filter.weights.len()
            && self.d_radii.len() == filter.radii.len()
    }

    pub fn is_finite(&self) -> bool {
        self.d_positions
            .iter()
            .chain(self.d_weights.iter())
            .chain(self.d_radii.iter())
            .all(|v| v.is_finite())
    }

    /// Elementwise accumulate another gradient of the same shape.
    pub fn add_assign(&mut self, other: &SmpGradients) {
        debug_assert_eq!(self.d_positions.len(), other.d_positions.len());
        for (a, b) in self.d_positions.iter_mut().zip(&other.d_positions) {
            *a += b;
        }
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_radii.iter_mut().zip(&other.d_radii) {
            *a += b;
        }
    }
}
