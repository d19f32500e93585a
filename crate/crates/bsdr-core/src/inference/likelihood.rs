//! Datasets of per-agent trajectories, joint parameters, and the exact
//! dataset/prefix log-likelihoods.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::grid::{GridSpec, State, Trajectory};
use crate::model::{feature_counts, BsdrParams, FeatureCounts, SoftBackup};
use crate::{Error, Result};

/// One agent's trajectories with their summed feature-counts matrix
/// cached once at construction.
#[derive(Debug, Clone)]
pub struct AgentData {
    trajectories: Vec<Trajectory>,
    phi_total: FeatureCounts,
}

impl AgentData {
    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// `Φ^i = Σ_j Φ_{ξ^i_j}` over this agent's trajectories.
    pub fn phi_total(&self) -> &FeatureCounts {
        &self.phi_total
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// A validated corpus: the board it was collected on plus trajectories
/// grouped by agent. May be empty (no agents); every listed agent has at
/// least one trajectory.
#[derive(Debug, Clone)]
pub struct Dataset {
    spec: GridSpec,
    groups: BTreeMap<String, AgentData>,
}

impl Dataset {
    /// Build from explicit per-agent groups, validating every trajectory.
    pub fn new(spec: GridSpec, groups: BTreeMap<String, Vec<Trajectory>>) -> Result<Dataset> {
        let mut out = BTreeMap::new();
        for (agent, trajectories) in groups {
            if trajectories.is_empty() {
                return Err(Error::AgentMismatch(format!(
                    "agent {agent:?} is listed with no trajectories"
                )));
            }
            let mut phi_total = FeatureCounts::zeros(spec.feature_dim());
            for traj in &trajectories {
                let phi = feature_counts(&spec, traj)?;
                phi_total.scaled_add(&phi, 1.0);
            }
            out.insert(
                agent,
                AgentData {
                    trajectories,
                    phi_total,
                },
            );
        }
        Ok(Dataset { spec, groups: out })
    }

    /// Group a flat list by each trajectory's own agent id.
    pub fn from_trajectories(spec: GridSpec, trajectories: Vec<Trajectory>) -> Result<Dataset> {
        let mut groups: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
        for traj in trajectories {
            let id = traj.agent_id.clone().ok_or_else(|| {
                Error::AgentMismatch("trajectory carries no agent id".to_string())
            })?;
            groups.entry(id).or_default().push(traj);
        }
        Dataset::new(spec, groups)
    }

    /// All trajectories under one agent id.
    pub fn single_agent(
        spec: GridSpec,
        agent: impl Into<String>,
        trajectories: Vec<Trajectory>,
    ) -> Result<Dataset> {
        let mut groups = BTreeMap::new();
        groups.insert(agent.into(), trajectories);
        Dataset::new(spec, groups)
    }

    /// A dataset with no agents at all.
    pub fn empty(spec: GridSpec) -> Dataset {
        Dataset {
            spec,
            groups: BTreeMap::new(),
        }
    }

    /// Merge another corpus collected on an identical board; shared agent
    /// ids concatenate their trajectory lists.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.spec.fingerprint() != other.spec.fingerprint() {
            return Err(Error::AgentMismatch(
                "datasets were collected on different boards".to_string(),
            ));
        }
        let mut groups: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
        for (agent, data) in self.groups.iter().chain(other.groups.iter()) {
            groups
                .entry(agent.clone())
                .or_default()
                .extend(data.trajectories.iter().cloned());
        }
        Dataset::new(self.spec.clone(), groups)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn agents(&self) -> impl Iterator<Item = (&String, &AgentData)> {
        self.groups.iter()
    }

    pub fn agent(&self, id: &str) -> Option<&AgentData> {
        self.groups.get(id)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = &String> {
        self.groups.keys()
    }

    pub fn n_agents(&self) -> usize {
        self.groups.len()
    }

    pub fn n_trajectories(&self) -> usize {
        self.groups.values().map(|g| g.len()).sum()
    }
}

/// Shared reward weights plus one rationality vector per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub theta_r: Vec<f64>,
    pub theta_b: BTreeMap<String, Vec<f64>>,
}

impl JointParams {
    pub fn new(theta_r: Vec<f64>, theta_b: BTreeMap<String, Vec<f64>>) -> Self {
        JointParams { theta_r, theta_b }
    }

    /// The single-agent view for one agent id.
    pub fn agent_params(&self, agent: &str) -> Option<BsdrParams> {
        self.theta_b
            .get(agent)
            .map(|tb| BsdrParams::new(self.theta_r.clone(), tb.clone()))
    }

    /// Check dimensions, finiteness, and exact agent-set agreement with a
    /// dataset.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        let dim = data.spec().feature_dim();
        check_dim_finite(&self.theta_r, dim)?;
        for (agent, tb) in &self.theta_b {
            check_dim_finite(tb, dim)?;
            if data.agent(agent).is_none() {
                return Err(Error::AgentMismatch(format!(
                    "parameters cover agent {agent:?} which the dataset lacks"
                )));
            }
        }
        for agent in data.agent_ids() {
            if !self.theta_b.contains_key(agent) {
                return Err(Error::AgentMismatch(format!(
                    "dataset has agent {agent:?} with no rationality vector"
                )));
            }
        }
        Ok(())
    }
}

fn check_dim_finite(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams(
            "parameter vector has a non-finite entry".to_string(),
        ));
    }
    Ok(())
}

/// Exact joint log-likelihood `Σ_i Σ_j log P(ξ^i_j | θ_R, θ_β^i)`.
///
/// Uses each agent's cached `Φ^i` for the score part and one backward
/// recursion per distinct `θ_β^i` value for the partition part.
pub fn dataset_log_likelihood(data: &Dataset, params: &JointParams) -> Result<f64> {
    params.validate_for(data)?;
    let mut log_z_by_theta_b: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (agent, agent_data) in data.agents() {
        let theta_b = &params.theta_b[agent];
        let key: Vec<u64> = theta_b.iter().map(|x| x.to_bits()).collect();
        let log_z = match log_z_by_theta_b.get(&key) {
            Some(&z) => z,
            None => {
                let single = BsdrParams::new(params.theta_r.clone(), theta_b.clone());
                let backup = SoftBackup::compute(data.spec(), &single)?;
                let z = backup.log_partition();
                log_z_by_theta_b.insert(key, z);
                z
            }
        };
        let score_sum = -agent_data.phi_total.bilinear(theta_b, &params.theta_r);
        total += score_sum - agent_data.len() as f64 * log_z;
    }
    Ok(total)
}

/// Log-probability of observing the state prefix `s_0..s_k` (marginal
/// over all completions): the weights of the visited states short of the
/// last, plus the suffix table at `(k, s_k)`, minus `log Z`. At `k = T`
/// this is the full trajectory log-probability.
pub fn prefix_log_likelihood(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
    prefix: &[State],
) -> Result<f64> {
    backup.ensure_current(spec, params)?;
    params.validate_for(spec)?;
    spec.validate_prefix(prefix)?;
    let k = prefix.len() - 1;
    let mut acc = 0.0;
    for &s in &prefix[..k] {
        let phi = spec.phi(s)?;
        let beta: f64 = phi
            .iter()
            .zip(params.theta_b.iter())
            .map(|(p, t)| p * t)
            .sum();
        let cost: f64 = phi
            .iter()
            .zip(params.theta_r.iter())
            .map(|(p, t)| p * t)
            .sum();
        acc -= beta * cost;
    }
    Ok(acc + backup.at(k, spec.cell_index(prefix[k])) - backup.log_partition())
}
