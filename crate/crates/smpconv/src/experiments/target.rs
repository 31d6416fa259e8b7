//! Analytic 2D targets for the kernel-fitting experiment.

use std::f64::consts::PI;

use crate::error::{Result, SmpError};
use crate::grid::GridSpec;

/// The two built-in targets over [-1, 1]^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// sin(4πx) · sin(4πy): a separable checkered wave.
    SinSinProduct,
    /// sin(6π(x² + y²)): rings whose frequency grows with the radius.
    RadialChirp,
}

impl TargetKind {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            TargetKind::SinSinProduct => (4.0 * PI * x).sin() * (4.0 * PI * y).sin(),
            TargetKind::RadialChirp => (6.0 * PI * (x * x + y * y)).sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::SinSinProduct => "sinsin",
            TargetKind::RadialChirp => "chirp",
        }
    }
}

/// A target sampled on a grid, row-major like every kernel.
#[derive(Debug, Clone)]
pub struct TargetFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl TargetFunction {
    pub fn from_kind(kind: TargetKind, grid: GridSpec) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(SmpError::ShapeMismatch(
                "analytic targets are functions of two coordinates".into(),
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut x = [0.0; 2];
        for cell in 0..grid.len() {
            grid.coord_at(cell, &mut x);
            values.push(kind.eval(x[0], x[1]));
        }
        Ok(Self { grid, values })
    }

    pub fn from_samples(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SmpError::ShapeMismatch(format!(
                "{} samples for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SmpError::InvalidParameter(
                "target samples must be finite".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
