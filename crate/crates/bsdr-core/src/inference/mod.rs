//! Inverse inference: dataset likelihoods under shared-reward /
//! per-agent-rationality structure, Bayesian posteriors over discretized
//! parameter grids, gradient-based point estimation with the exact
//! log-partition term, the partition-free constrained heuristic with its
//! Lagrange diagnostics, and goal inference from trajectory prefixes.

pub mod heuristic;
pub mod likelihood;
pub mod mle;
pub mod posterior;

pub use heuristic::{heuristic_fit, lagrange_residual, HeuristicConfig, HeuristicFit};
pub use likelihood::{
    dataset_log_likelihood, prefix_log_likelihood, AgentData, Dataset, JointParams,
};
pub use mle::{gradient, mle_fit, objective, FitDiagnostics, FitResult, JointGrad, OptConfig};
pub use posterior::{
    goal_posterior, grid_posterior, grid_posterior_budgeted, log_unnorm_posterior,
    posterior_from_log_values, GridAxes, PosteriorGrid, Prior, DEFAULT_GRID_BUDGET,
};
