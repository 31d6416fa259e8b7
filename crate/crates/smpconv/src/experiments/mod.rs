//! Reproducible experiment drivers behind the CLI: fitting analytic targets,
//! a long-range sequence classification task, and kernel image export.

pub mod fit;
pub mod sequence;
pub mod target;
pub mod visualize;
