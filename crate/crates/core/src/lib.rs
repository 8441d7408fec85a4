//! Finite-sample toolkit for collapsing Alexandrov spaces.
//!
//! Given distance tables of a space `M` and of a lower-dimensional space `X`
//! close to it, the crate builds a map `f: M → X` by blending distance-coordinate
//! charts over a net of `X`, and measures the fibers of `f`: their diameter,
//! induced intrinsic metric, packing counts and strained subsets.

pub mod error;
pub mod experiment;
pub mod fiber;
pub mod generators;
pub mod glue;
pub mod metric;
pub mod model_geom;
pub mod strainers;

pub use error::{Error, Result};
pub use metric::FiniteMetricSpace;
pub use model_geom::Curvature;
