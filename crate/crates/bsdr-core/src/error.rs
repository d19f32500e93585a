//! Error type shared across the crate.

use alloc::string::String;

/// Everything that can go wrong when building grids, scoring
/// trajectories, or running inference.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The grid description is internally inconsistent (zero-sized board,
    /// start on an obstacle, goal outside the board, ...).
    #[error("invalid grid: {0}")]
    InvalidSpec(String),

    /// A state lies outside the board or on an obstacle.
    #[error("state ({x}, {y}) is not a valid cell")]
    InvalidState { x: i32, y: i32 },

    /// A trajectory fails validation against a grid.
    #[error("invalid trajectory at step {step}: {reason}")]
    InvalidTrajectory { step: usize, reason: String },

    /// A vector has the wrong length for the grid's feature map.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A parameter value violates its own invariants (non-finite entries,
    /// negative rationality where forbidden, bad optimizer settings, ...).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A posterior evaluation grid has no points.
    #[error("parameter grid is empty")]
    EmptyGrid,

    /// Exhaustive trajectory enumeration would exceed the configured cap.
    #[error("enumeration of {requested} trajectories exceeds cap {cap}")]
    OracleCapExceeded { requested: u128, cap: u128 },

    /// A grid-posterior evaluation would exceed the configured budget.
    #[error("posterior grid of {requested} points exceeds budget {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },

    /// A cached backup was built for different parameters or a different
    /// grid than the ones it is being used with.
    #[error("backup is stale: it was computed for different parameters or a different grid")]
    StaleBackup,

    /// An operation requires the feature map to carry a constant bias
    /// coordinate, and this one does not.
    #[error(
        "feature map has no constant bias coordinate; constant-rationality scoring is unsupported"
    )]
    NoBiasFeature,

    /// A dataset references an agent the parameter set does not cover,
    /// or vice versa.
    #[error("agent mismatch: {0}")]
    AgentMismatch(String),

    /// An optimizer reached a degenerate point where its output is
    /// undefined (for example a zero direction vector).
    #[error("degenerate solution: {0}")]
    DegenerateSolution(String),

    /// A numerical routine produced a non-finite value.
    #[error("numerical divergence: {0}")]
    Diverged(String),

    /// The candidate set for goal inference is empty or inconsistent.
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),
}
