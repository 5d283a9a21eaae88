//! Error type shared across the crate.

use alloc::string::String;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong in the numeric core.
///
/// Variants carry enough context to identify the failing call site without a
/// backtrace; messages name the operation and the offending shapes or values.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor operation received operands of incompatible shapes.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// Backward pass was started from a non-scalar node.
    #[error("backward requires a scalar loss, got a tensor of {len} elements")]
    NonScalarLoss { len: usize },

    /// Distributions of different dimension were combined.
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    /// Mixture weights are not a valid simplex vector.
    #[error("invalid mixture weights: {reason}")]
    InvalidWeights { reason: String },

    /// A scene violated a structural invariant (track lengths, agent count).
    #[error("invalid scene {scene_id}: {reason}")]
    InvalidScene { scene_id: String, reason: String },

    /// Dataset-level problem: empty split, not enough scenes, duplicate ids.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A coupling matrix does not match the mixtures it is used with, or its
    /// marginals drifted from the mixture weights.
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    /// A closed-form coupling update hit an all-zero column and cannot
    /// renormalize; signals a degenerate initialization.
    #[error("degenerate coupling: column {column} of beta has no mass")]
    DegenerateCoupling { column: usize },

    /// An iterative solver produced a non-finite objective.
    #[error("non-finite objective at iteration {iteration} of {op}")]
    NonFinite { op: &'static str, iteration: usize },

    /// Teacher and student disagree on the latent dimension.
    #[error("latent dimension mismatch: teacher d_z = {teacher}, student d_z = {student}")]
    LatentDimMismatch { teacher: usize, student: usize },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Predictions and ground truth do not line up (missing scene, wrong
    /// agent count or step count).
    #[error("prediction/scene mismatch: {0}")]
    PredictionMismatch(String),
}
