//! Convolution layers assembled from point-set filters.
//!
//! A layer owns one filter per output channel, an optional small dense
//! branch trained in parallel, and the flags that pick the convolution
//! flavor. Positions may be private to each filter or shared across the
//! whole layer (the shared case stores identical copies and the optimizer
//! keeps them in lockstep).

use crate::conv1d::{conv1d_causal_direct, conv1d_causal_fft, Sequence};
use crate::conv2d::{conv2d_depthwise, conv2d_direct, Image};
use crate::error::{Result, SmpError};
use crate::filter::SmpFilter;
use crate::grid::GridSpec;
use crate::kernel::{fuse_branches, rasterize_layer, KernelTensor};

/// How far position and radius parameters are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionSharing {
    /// Each filter owns its positions; channels within a filter share them.
    Filter,
    /// Every filter in the layer uses one position and radius set.
    Layer,
}

#[derive(Debug, Clone)]
pub struct ConvLayerSpec {
    filters: Vec<SmpFilter>,
    position_sharing: PositionSharing,
    small_branch: Option<KernelTensor>,
    causal: bool,
    depthwise: bool,
}

impl ConvLayerSpec {
    /// Causal 1D layer; the small branch, if any, runs as its own causal
    /// convolution (no parity constraint on its length).
    pub fn causal_1d(
        filters: Vec<SmpFilter>,
        position_sharing: PositionSharing,
        small_branch: Option<KernelTensor>,
    ) -> Result<Self> {
        Self::build(filters, position_sharing, small_branch, true, false, 1)
    }

    /// Dense-connectivity 2D layer with same-size zero padding.
    pub fn standard_2d(
        filters: Vec<SmpFilter>,
        position_sharing: PositionSharing,
        small_branch: Option<KernelTensor>,
    ) -> Result<Self> {
        Self::build(filters, position_sharing, small_branch, false, false, 2)
    }

    /// Depthwise 2D layer: filter c services input channel c alone, so every
    /// filter carries exactly one channel.
    pub fn depthwise_2d(
        filters: Vec<SmpFilter>,
        position_sharing: PositionSharing,
        small_branch: Option<KernelTensor>,
    ) -> Result<Self> {
        Self::build(filters, position_sharing, small_branch, false, true, 2)
    }

    fn build(
        filters: Vec<SmpFilter>,
        position_sharing: PositionSharing,
        small_branch: Option<KernelTensor>,
        causal: bool,
        depthwise: bool,
        dim: usize,
    ) -> Result<Self> {
        let first = filters.first().ok_or_else(|| {
            SmpError::InvalidParameter("layer needs at least one filter".into())
        })?;
        let channels = first.channels();
        if filters
            .iter()
            .any(|f| f.dim() != dim || f.channels() != channels)
        {
            return Err(SmpError::ShapeMismatch(
                "all filters in a layer must share dimension and channel count".into(),
            ));
        }
        if depthwise && channels != 1 {
            return Err(SmpError::InvalidParameter(
                "depthwise filters carry exactly one channel each".into(),
            ));
        }
        if position_sharing == PositionSharing::Layer {
            let (p0, r0) = (first.positions(), first.radii());
            if filters
                .iter()
                .any(|f| f.positions() != p0 || f.radii() != r0)
            {
                return Err(SmpError::InvalidParameter(
                    "layer-shared filters must hold identical positions and radii".into(),
                ));
            }
        }
        if let Some(small) = &small_branch {
            if small.extent().len() != dim {
                return Err(SmpError::ShapeMismatch(format!(
                    "small branch extent {:?} does not match layer dimension {dim}",
                    small.extent()
                )));
            }
            let want_in = if depthwise { 1 } else { channels };
            if small.out_channels() != filters.len() || small.in_channels() != want_in {
                return Err(SmpError::ShapeMismatch(format!(
                    "small branch is {}x{}, layer needs {}x{}",
                    small.out_channels(),
                    small.in_channels(),
                    filters.len(),
                    want_in
                )));
            }
            if !causal && small.extent().iter().any(|&n| n % 2 == 0) {
                return Err(SmpError::InvalidParameter(
                    "centered small branch needs odd extents".into(),
                ));
            }
        }
        Ok(Self {
            filters,
            position_sharing,
            small_branch,
            causal,
            depthwise,
        })
    }

    pub fn filters(&self) -> &[SmpFilter] {
        &self.filters
    }

    pub fn filters_mut(&mut self) -> &mut [SmpFilter] {
        &mut self.filters
    }

    pub fn position_sharing(&self) -> PositionSharing {
        self.position_sharing
    }

    pub fn small_branch(&self) -> Option<&KernelTensor> {
        self.small_branch.as_ref()
    }

    pub fn small_branch_mut(&mut self) -> Option<&mut KernelTensor> {
        self.small_branch.as_mut()
    }

    pub fn causal(&self) -> bool {
        self.causal
    }

    pub fn depthwise(&self) -> bool {
        self.depthwise
    }

    pub fn dim(&self) -> usize {
        self.filters[0].dim()
    }

    /// Learnable scalar count. Weights always count per filter; positions and
    /// radii count once per filter, or once per layer when shared. A small
    /// branch adds its dense tap count.
    pub fn param_count(&self) -> usize {
        let f = &self.filters[0];
        let (np, d, c) = (f.n_points(), f.dim(), f.channels());
        let per_filter_weights = c * np;
        let pos_and_radii = (d + 1) * np;
        let smp = match self.position_sharing {
            PositionSharing::Filter => self.filters.len() * (per_filter_weights + pos_and_radii),
            PositionSharing::Layer => self.filters.len() * per_filter_weights + pos_and_radii,
        };
        smp + self.small_branch.as_ref().map_or(0, |k| k.values().len())
    }

    /// Run the causal FFT path on a sequence. The grid must produce exactly
    /// one tap per timestep.
    pub fn forward_1d(&self, grid: &GridSpec, signal: &Sequence) -> Result<Sequence> {
        if !self.causal {
            return Err(SmpError::InvalidParameter(
                "forward_1d needs a causal layer".into(),
            ));
        }
        if grid.dim() != 1 {
            return Err(SmpError::ShapeMismatch("causal layer needs a 1D grid".into()));
        }
        if grid.extent()[0] != signal.len() {
            return Err(SmpError::ShapeMismatch(format!(
                "kernel grid has {} taps, signal has {} samples; they must match",
                grid.extent()[0],
                signal.len()
            )));
        }
        let kernel = rasterize_layer(&self.filters, grid)?;
        let mut out = conv1d_causal_fft(&kernel, signal)?;
        if let Some(small) = &self.small_branch {
            let extra = conv1d_causal_direct(small, signal)?;
            for (o, e) in out.values_mut().iter_mut().zip(extra.values()) {
                *o += e;
            }
        }
        Ok(out)
    }

    /// Run the 2D path (standard or depthwise per the layer flavor).
    pub fn forward_2d(&self, grid: &GridSpec, input: &Image) -> Result<Image> {
        if self.causal {
            return Err(SmpError::InvalidParameter(
                "forward_2d cannot run a causal layer".into(),
            ));
        }
        if grid.dim() != 2 {
            return Err(SmpError::ShapeMismatch("2D layer needs a 2D grid".into()));
        }
        let kernel = rasterize_layer(&self.filters, grid)?;
        let mut out = if self.depthwise {
            conv2d_depthwise(&kernel, input)?
        } else {
            conv2d_direct(&kernel, input)?
        };
        if let Some(small) = &self.small_branch {
            let extra = if self.depthwise {
                conv2d_depthwise(small, input)?
            } else {
                conv2d_direct(small, input)?
            };
            for (o, e) in out.values_mut().iter_mut().zip(extra.values()) {
                *o += e;
            }
        }
        Ok(out)
    }

    /// Rasterize and merge the small branch into one inference kernel.
    /// Requires a centered (non-causal) layer and odd extents throughout.
    pub fn fused_kernel(&self, grid: &GridSpec) -> Result<KernelTensor> {
        if self.causal {
            return Err(SmpError::InvalidParameter(
                "causal branches are applied separately, not center-fused".into(),
            ));
        }
        let kernel = rasterize_layer(&self.filters, grid)?;
        match &self.small_branch {
            Some(small) => fuse_branches(&kernel, small),
            None => Ok(kernel),
        }
    }
}

/// Tap count of a dense kernel of the given shape, for baseline comparisons.
pub fn dense_param_count(out_channels: usize, in_channels: usize, extent: &[usize]) -> usize {
    out_channels * in_channels * extent.iter().product::<usize>()
}
