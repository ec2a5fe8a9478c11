//! Tree-sliced Wasserstein distances with linear, circular, spatial and spherical
//! projections, exact small-instance oracles, analytic gradients and gradient-flow runners.

pub mod distances;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod gradients;
pub mod projection;
pub mod splitting;
pub mod transport;
pub mod tree_ot;

pub use distances::{
    estimate_stsw, estimate_stsw_with_trees, estimate_sw, estimate_sw_with_directions,
    estimate_tsw, estimate_tsw_with_trees, sample_spherical_trees, sample_trees, DistanceConfig,
    DistanceEstimate, StswMode, TswMode,
};
pub use error::{Error, Result};
pub use geometry::{DiscreteMeasure, IsometryEd, SphericalTree, TreeSystem};
pub use tree_ot::{lp_tree_w1_oracle, one_dim_w1, spider_w1, ProjectedTreeMeasure};
