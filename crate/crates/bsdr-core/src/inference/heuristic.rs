//! Partition-free heuristic fit: maximize `‖Σ_i Φ^i θ_β^i‖²` over
//! unit-norm rationality vectors and read the cost direction off in
//! closed form. A diagnostic baseline, not a statistically consistent
//! estimator — the normalizer the full objective carries is dropped
//! here by construction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::inference::likelihood::{Dataset, JointParams};
use crate::math;
use crate::{Error, Result};

const MIN_DIRECTION_NORM: f64 = 1e-9;

/// Settings for the heuristic ascent.
#[derive(Debug, Clone)]
pub struct HeuristicConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest per-agent stationarity
    /// residual.
    pub tol: f64,
    /// Starting rationality vectors; `None` means the normalized
    /// all-ones vector per agent. Entries are renormalized to unit
    /// length.
    pub init: Option<BTreeMap<String, Vec<f64>>>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            step_size: 0.5,
            max_iters: 10_000,
            tol: 1e-8,
            init: None,
        }
    }
}

/// Result of the heuristic fit.
#[derive(Debug, Clone)]
pub struct HeuristicFit {
    /// Unit cost direction (opposite the summed feature-count image)
    /// plus the fitted unit rationality vectors.
    pub params: JointParams,
    /// `‖Σ_i Φ^i θ_β^i‖²` at the start and after every update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Per-agent stationarity residuals at the returned point.
    pub residuals: BTreeMap<String, f64>,
    /// Per-agent least-squares Lagrange multipliers at the returned
    /// point.
    pub multipliers: BTreeMap<String, f64>,
}

fn direction(data: &Dataset, theta_b: &BTreeMap<String, Vec<f64>>) -> Vec<f64> {
    let dim = data.spec().feature_dim();
    let mut v = vec![0.0; dim];
    for (agent, group) in data.agents() {
        let image = group.phi_total().mat_vec(&theta_b[agent]);
        for (vi, xi) in v.iter_mut().zip(image) {
            *vi += xi;
        }
    }
    v
}

/// Per-agent residual `‖2Φ^i v + 2λ^i θ_β^i‖` with the least-squares
/// multiplier `λ^i = −θ_β^iᵀ Φ^i v`, given unit `θ_β^i`.
fn residuals_and_multipliers(
    data: &Dataset,
    theta_b: &BTreeMap<String, Vec<f64>>,
    v: &[f64],
) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut residuals = BTreeMap::new();
    let mut multipliers = BTreeMap::new();
    for (agent, group) in data.agents() {
        let tb = &theta_b[agent];
        let image = group.phi_total().mat_vec(v);
        let lambda = -math::dot(tb, &image);
        let mut sq = 0.0;
        for (ii, ti) in image.iter().zip(tb) {
            let r = 2.0 * (ii + lambda * ti);
            sq += r * r;
        }
        residuals.insert(agent.clone(), math::sqrt(sq));
        multipliers.insert(agent.clone(), lambda);
    }
    (residuals, multipliers)
}

fn unit_init(data: &Dataset, cfg: &HeuristicConfig) -> Result<BTreeMap<String, Vec<f64>>> {
    let dim = data.spec().feature_dim();
    match &cfg.init {
        None => {
            let ones = vec![1.0 / math::sqrt(dim as f64); dim];
            Ok(data
                .agent_ids()
                .map(|id| (id.clone(), ones.clone()))
                .collect())
        }
        Some(init) => {
            let mut out = BTreeMap::new();
            for agent in data.agent_ids() {
                let tb = init.get(agent).ok_or_else(|| {
                    Error::AgentMismatch(format!("no initial vector for agent {agent:?}"))
                })?;
                if tb.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: tb.len(),
                    });
                }
                if tb.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "initial vector for agent {agent:?} has a non-finite entry"
                    )));
                }
                let norm = math::norm(tb);
                if norm <= MIN_DIRECTION_NORM {
                    return Err(Error::InvalidParams(format!(
                        "initial vector for agent {agent:?} has no direction"
                    )));
                }
                out.insert(agent.clone(), tb.iter().map(|x| x / norm).collect());
            }
            for agent in init.keys() {
                if data.agent(agent).is_none() {
                    return Err(Error::AgentMismatch(format!(
                        "initial vector for unknown agent {agent:?}"
                    )));
                }
            }
            Ok(out)
        }
    }
}

/// Fit rationality vectors by projected gradient ascent on
/// `‖Σ_i Φ^i θ_β^i‖²` and set the cost weights to the opposite unit
/// direction.
///
/// Errors with a degenerate-solution report when the summed direction
/// vanishes at convergence (every unit cost vector is then equally
/// stationary and nothing is identified).
pub fn heuristic_fit(data: &Dataset, cfg: &HeuristicConfig) -> Result<HeuristicFit> {
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "step size must be positive and finite, got {}",
            cfg.step_size
        )));
    }
    if data.n_agents() == 0 {
        return Err(Error::DegenerateSolution(
            "corpus has no agents, so the summed direction is zero".to_string(),
        ));
    }
    let mut theta_b = unit_init(data, cfg)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let v = direction(data, &theta_b);
        trace.push(math::dot(&v, &v));
        let (residuals, _) = residuals_and_multipliers(data, &theta_b, &v);
        let max_residual = residuals.values().fold(0.0f64, |a, &b| a.max(b));
        if max_residual < cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        // Simultaneous projected ascent step: each agent moves along
        // 2Φ^i v and renormalizes; a collapsing vector keeps its old
        // direction for this round.
        for (agent, group) in data.agents() {
            let image = group.phi_total().mat_vec(&v);
            let tb = theta_b.get_mut(agent).expect("initialized above");
            let stepped: Vec<f64> = tb
                .iter()
                .zip(&image)
                .map(|(t, i)| t + cfg.step_size * 2.0 * i)
                .collect();
            let norm = math::norm(&stepped);
            if norm > MIN_DIRECTION_NORM {
                *tb = stepped.iter().map(|x| x / norm).collect();
            }
        }
        iterations += 1;
    }

    let v = direction(data, &theta_b);
    let norm_v = math::norm(&v);
    if converged && norm_v <= MIN_DIRECTION_NORM {
        return Err(Error::DegenerateSolution(format!(
            "summed direction has norm {norm_v:e} at convergence; the cost direction is unidentified"
        )));
    }
    let (residuals, multipliers) = residuals_and_multipliers(data, &theta_b, &v);
    let theta_r: Vec<f64> = v.iter().map(|x| -x / norm_v).collect();
    // The returned cost weights must satisfy the closed form exactly;
    // recompute from the returned rationality vectors and check.
    {
        let v_check = direction(data, &theta_b);
        let n_check = math::norm(&v_check);
        for (r, vc) in theta_r.iter().zip(&v_check) {
            let expected = -vc / n_check;
            assert!(
                (r - expected).abs() <= 1e-12,
                "cost direction drifted from its closed form"
            );
        }
    }
    Ok(HeuristicFit {
        params: JointParams::new(theta_r, theta_b),
        objective_trace: trace,
        iterations,
        converged,
        residuals,
        multipliers,
    })
}

/// Stationarity residual per agent at a joint parameter point with unit
/// rationality vectors: `‖2Φ^i v + 2λ^i θ_β^i‖` after the best
/// per-agent multiplier.
pub fn lagrange_residual(params: &JointParams, data: &Dataset) -> Result<BTreeMap<String, f64>> {
    params.validate_for(data)?;
    for (agent, tb) in &params.theta_b {
        let norm = math::norm(tb);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "rationality vector for agent {agent:?} has norm {norm}, expected 1"
            )));
        }
    }
    let v = direction(data, &params.theta_b);
    let (residuals, _) = residuals_and_multipliers(data, &params.theta_b, &v);
    Ok(residuals)
}
