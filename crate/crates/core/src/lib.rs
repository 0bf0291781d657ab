//! Speaker-invariant clustering at desk scale.
//!
//! A frozen-bottom encoder feeds a projection and a unit-norm codebook; two
//! views of each batch (original and speaker-perturbed) are trained so that
//! each view's code distribution predicts the balanced, entropy-smoothed
//! assignment computed from the other view. The crate also carries the
//! synthetic two-factor corpora the method is exercised on and the metrics
//! used to judge it: purity/PNMI, ABX discrimination and speaker probes.

// `!(x > 0.0)` rejects NaN together with the out-of-range values, and
// index loops follow the formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod perturb;
pub mod sinkhorn;
pub mod training;

pub use assignment::AssignmentMatrix;
pub use dataset::{perturbation_draw, Dataset, StackedFrames};
pub use error::{Error, Result};

/// `B × D` matrix of per-frame vectors, one frame per row.
pub type FrameMatrix = ndarray::Array2<f64>;
