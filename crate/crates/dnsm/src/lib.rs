//! Approximate convex decomposition of binary 2D shapes.
//!
//! A shape is modeled as a union of deformable convex polytopes, each the
//! intersection of sigmoid-smoothed half-spaces (a disjunctive normal shape
//! model). Because every polytope stays convex under any parameter update,
//! fitting the model to a shape by gradient descent decomposes it into
//! approximately convex parts without ever measuring convexity during the
//! evolution — and the per-polytope significance computed along the way
//! doubles as a shape convexity measure.
//!
//! The pipeline has three stages:
//!
//! 1. [`model::init_polytopes`] seeds discs on a grid and
//!    [`optimizer::fit`] grows them under an overlap-*rewarding* energy.
//! 2. [`convexity::prune`] greedily drops insignificant polytopes.
//! 3. A second [`optimizer::fit`] under an overlap-*penalizing* energy
//!    fills gaps and gives each part its own polytope.
//!
//! [`pipeline::decompose`] runs all three and produces part labels, a part
//! connectivity graph, and fit diagnostics. [`convexity::global_concavity`]
//! and [`convexity::baseline_concavities`] provide the shape-level
//! measures.

pub mod convexity;
pub mod error;
pub mod hull;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod pipeline;
pub mod raster;

pub use convexity::{
    baseline_concavities, compute_regions, global_concavity, prune, significance,
    ConvexityReport, PruneMode, PruneParams, RegionStats,
};
pub use error::{Error, Result};
pub use hull::convex_hull;
pub use model::{
    disc_polytope, eval_halfspace, eval_model, eval_polytope, init_polytopes, Discriminant,
    DnsmModel, ModelConfig, Polytope,
};
pub use optimizer::{energy, fit, gradient, EnergyBreakdown, FitParams, FitTrace, OverlapSign};
pub use pipeline::{
    decompose, decompose_run, label_map, DecompositionResult, Diagnostics, LabelMap,
    PipelineParams, PipelineRun,
};
pub use raster::{CoordFrame, ShapeRaster};
