//! Finite metric spaces and the measurements taken on them: discrete nets,
//! packing counts, induced intrinsic metrics and correspondences between two
//! spaces.

mod correspondence;
mod intrinsic;
pub mod io;
mod net;
mod packing;
mod space;
mod validate;

pub use correspondence::{Correspondence, CorrespondenceReport, Side, WorstPair};
pub use intrinsic::{intrinsic_metric, IntrinsicMetric};
pub use net::{farthest_first, greedy_net, FarthestFirst, Net};
pub use packing::{
    default_grid, default_window, exact_packing, log_grid, packing_count, packing_profile,
    packing_slope, PackingCount, PackingMode, PackingProfile, EXACT_CAP,
};
pub use space::{FiniteMetricSpace, DEFAULT_PRODUCT_CAP};
pub use validate::{default_tol_tri, validate, validate_table, TriangleDefect, ValidationReport};
