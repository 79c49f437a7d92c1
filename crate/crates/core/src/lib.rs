//! Partial-to-partial rigid point cloud registration.
//!
//! The matching core scores source/target descriptors against each other,
//! appends an outlier row and column to the score matrix, and solves the
//! resulting entropic optimal transport problem with a log-domain Sinkhorn
//! iteration. Hard correspondences extracted from the transport plan feed a
//! closed-form SVD Procrustes solve. An ICP baseline, synthetic scenario
//! generators (partial crops, clipped noise, self-occluded renders) and the
//! usual rotation/translation error metrics complete the toolkit.

pub mod datagen;
pub mod descriptors;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod procrustes;
pub mod random;
pub mod sinkhorn;

pub use descriptors::{DescriptorProvider, Descriptors};
pub use error::{Error, Result};
pub use geometry::{EulerAngles, PointCloud, RigidTransform};
pub use procrustes::CorrespondenceSet;
pub use sinkhorn::{
    AugmentedScoreMatrix, GroundTruthMatrix, Marginals, ScoreMatrix, SinkhornConfig,
    TransportPlan,
};
