//! Experiment harnesses: synthetic populations, fits, and evaluations
//! packaged as deterministic, seed-indexed reports.

pub mod generalization;
pub mod goals;
pub mod prediction;
pub mod recovery;
pub mod roster;

use std::collections::BTreeMap;

use bsdr_core::grid::{GridSpec, State, Trajectory};
use bsdr_core::inference::{Dataset, JointParams};
use bsdr_core::math::derive_seed;
use bsdr_core::model::{log_partition, sample_trajectory, BsdrParams};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Deserialize;

pub use generalization::run_generalization;
pub use goals::run_goal_inference;
pub use prediction::run_action_prediction;
pub use recovery::run_parameter_recovery;
pub use roster::{FittedModel, RosterModel};

use crate::{CliError, Result};

pub(crate) fn default_n_seeds() -> u64 {
    20
}

/// Zero-padded agent ids `a00`, `a01`, ... sized to the population.
pub fn agent_ids(n: usize) -> Vec<String> {
    let width = n.max(1).to_string().len();
    (0..n).map(|i| format!("a{i:0width$}")).collect()
}

/// Sample `per_agent` trajectories for every agent from the model with
/// shared cost weights and per-agent rationality vectors. Each agent
/// draws from its own stream, so the population is stable under
/// reordering and the whole dataset is reproducible from `seed`.
pub fn sample_population(
    spec: &GridSpec,
    theta_r: &[f64],
    theta_b: &BTreeMap<String, Vec<f64>>,
    per_agent: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut groups: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for (i, (agent, tb)) in theta_b.iter().enumerate() {
        let params = BsdrParams::new(theta_r.to_vec(), tb.clone());
        let backup = log_partition(spec, &params)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let mut trajs = Vec::with_capacity(per_agent);
        for _ in 0..per_agent {
            trajs.push(sample_trajectory(spec, &params, &backup, &mut rng)?);
        }
        groups.insert(agent.clone(), trajs);
    }
    Ok(Dataset::new(spec.clone(), groups)?)
}

/// Draw one rationality vector with each entry uniform in its range.
pub fn sample_theta_b(ranges: &[[f64; 2]], rng: &mut StdRng) -> Vec<f64> {
    ranges
        .iter()
        .map(|r| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..r[1])
            }
        })
        .collect()
}

/// Per-entry uniform ranges must be ordered and sized to the features.
pub fn validate_ranges(ranges: &[[f64; 2]], dim: usize) -> Result<()> {
    if ranges.len() != dim {
        return Err(CliError::Invalid(format!(
            "beta_ranges has {} entries for feature dimension {dim}",
            ranges.len()
        )));
    }
    for r in ranges {
        if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
            return Err(CliError::Invalid(format!(
                "range [{}, {}] is not an ordered finite interval",
                r[0], r[1]
            )));
        }
    }
    Ok(())
}

/// Deterministic per-agent split: the first `ceil(3n/4)` trajectories
/// train, the rest test.
pub fn split_train_test(data: &Dataset) -> Result<(Dataset, Dataset)> {
    let mut train: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    let mut test: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for (agent, agent_data) in data.agents() {
        let trajs = agent_data.trajectories();
        let cut = (3 * trajs.len()).div_ceil(4);
        train.insert(agent.clone(), trajs[..cut].to_vec());
        if cut < trajs.len() {
            test.insert(agent.clone(), trajs[cut..].to_vec());
        }
    }
    Ok((
        Dataset::new(data.spec().clone(), train)?,
        Dataset::new(data.spec().clone(), test)?,
    ))
}

/// First `floor(fraction * horizon)` transitions of a trajectory.
pub fn prefix_for_fraction(traj: &Trajectory, fraction: f64) -> Vec<State> {
    let t = traj.len();
    let k = ((fraction * t as f64).floor() as usize).min(t);
    traj.states[..=k].to_vec()
}

/// Whether two parameter points induce the same trajectory
/// distribution: agent sets equal and every per-agent outer product
/// of rationality and cost weights equal to relative tolerance `tol`.
pub fn gauge_equivalent(a: &JointParams, b: &JointParams, tol: f64) -> bool {
    if a.theta_b.len() != b.theta_b.len() {
        return false;
    }
    for (agent, tb_a) in &a.theta_b {
        let Some(tb_b) = b.theta_b.get(agent) else {
            return false;
        };
        if tb_a.len() != tb_b.len() || a.theta_r.len() != b.theta_r.len() {
            return false;
        }
        let mut max_abs = 0.0f64;
        let mut max_diff = 0.0f64;
        for &bi_a in tb_a.iter() {
            for &ri_a in &a.theta_r {
                max_abs = max_abs.max((bi_a * ri_a).abs());
            }
        }
        for &bi_b in tb_b.iter() {
            for &ri_b in &b.theta_r {
                max_abs = max_abs.max((bi_b * ri_b).abs());
            }
        }
        for (&bi_a, &bi_b) in tb_a.iter().zip(tb_b) {
            for (&ri_a, &ri_b) in a.theta_r.iter().zip(&b.theta_r) {
                max_diff = max_diff.max((bi_a * ri_a - bi_b * ri_b).abs());
            }
        }
        if max_diff > tol * max_abs.max(1.0) {
            return false;
        }
    }
    true
}

/// Config table for the parameter-recovery experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub theta_r: Vec<f64>,
    pub theta_b: Vec<f64>,
    #[serde(default = "default_counts")]
    pub counts: Vec<usize>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: u64,
    pub theta_r_axes: Vec<Vec<f64>>,
    pub theta_b_axes: Vec<Vec<f64>>,
}

pub(crate) fn default_counts() -> Vec<usize> {
    vec![10, 50, 200]
}

/// Config table for the goal-inference experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalInferenceConfig {
    pub candidates: Vec<Vec<[i32; 2]>>,
    #[serde(default)]
    pub true_goal_index: usize,
    pub theta_r: Vec<f64>,
    pub beta_ranges: Vec<[f64; 2]>,
    #[serde(default = "default_n_agents_goal")]
    pub n_agents: usize,
    #[serde(default = "default_trajs_goal")]
    pub trajectories_per_agent: usize,
    #[serde(default = "crate::config::default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_br_beta")]
    pub br_beta: f64,
    #[serde(default = "default_one")]
    pub n_seeds: u64,
}

fn default_n_agents_goal() -> usize {
    20
}

fn default_trajs_goal() -> usize {
    8
}

fn default_br_beta() -> f64 {
    1.0
}

fn default_one() -> u64 {
    1
}

/// Config table for the policy-generalization experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationConfig {
    pub theta_r: Vec<f64>,
    pub rational_theta_b: Vec<f64>,
    pub impaired_theta_b: Vec<f64>,
    #[serde(default = "default_n_agents_gen")]
    pub n_agents: usize,
    #[serde(default)]
    pub impaired_count: Option<usize>,
    #[serde(default = "default_trajs_gen")]
    pub trajectories_per_agent: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: u64,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn default_n_agents_gen() -> usize {
    8
}

fn default_trajs_gen() -> usize {
    10
}

/// Config table for the action-prediction experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    pub theta_r: Vec<f64>,
    pub beta_ranges: Vec<[f64; 2]>,
    #[serde(default = "default_n_agents_gen")]
    pub n_agents: usize,
    #[serde(default = "default_trajs_goal")]
    pub trajectories_per_agent: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: u64,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}
