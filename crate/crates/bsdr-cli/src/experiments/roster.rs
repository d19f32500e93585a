//! Model roster for baselines: the full state-dependent model, two
//! constant-rationality reductions (one shared scale, one scalar per
//! agent), and the uniform-policy reference.

use std::collections::BTreeMap;

use bsdr_core::grid::{GridSpec, State, Trajectory};
use bsdr_core::inference::{gradient, mle_fit, objective, Dataset, JointParams, OptConfig, Prior};
use bsdr_core::math;
use bsdr_core::model::{
    br_params, log_partition, step_action_log_probs, traj_log_prob, BsdrParams,
};

use crate::{CliError, Result};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Per-step cross-entropy of the uniform policy, `ln 5`.
pub fn uniform_cross_entropy() -> f64 {
    (bsdr_core::grid::Action::COUNT as f64).ln()
}

/// The four model families compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RosterModel {
    /// Full model: free rationality vector per agent.
    Bsdr,
    /// One shared constant rationality for the whole population.
    BrAggregate,
    /// One nonnegative constant rationality per agent.
    BrPerAgent,
    /// Uniform action choice; no parameters.
    Uniform,
}

impl RosterModel {
    pub fn name(self) -> &'static str {
        match self {
            RosterModel::Bsdr => "bsdr",
            RosterModel::BrAggregate => "br_aggregate",
            RosterModel::BrPerAgent => "br_per_agent",
            RosterModel::Uniform => "uniform",
        }
    }
}

/// A fitted roster entry; `params` is `None` for the uniform model.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: RosterModel,
    pub params: Option<JointParams>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

fn bias_vector(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

/// The constant-rationality reductions need a bias coordinate.
fn require_bias_feature(spec: &GridSpec) -> Result<()> {
    br_params(spec, &vec![0.0; spec.feature_dim()], 1.0)?;
    Ok(())
}

/// Fit the full model by penalized maximum likelihood.
pub fn fit_bsdr(data: &Dataset, prior: &Prior, cfg: &OptConfig) -> Result<FittedModel> {
    let fit = mle_fit(data, prior, cfg)?;
    let mut warnings = fit.diagnostics.warnings.clone();
    if data.n_agents() == 1 {
        warnings.push(
            "single-agent corpus: rationality and cost weights are identified only up to a shared rescaling"
                .to_string(),
        );
    }
    Ok(FittedModel {
        model: RosterModel::Bsdr,
        params: Some(fit.params),
        objective: fit.objective,
        converged: fit.diagnostics.converged,
        iterations: fit.diagnostics.iterations,
        warnings,
    })
}

/// Shared state for the two constrained reductions: cost weights plus a
/// scalar rationality per agent, with the per-agent scalars optionally
/// frozen at one.
struct ReducedFit {
    theta_r: Vec<f64>,
    betas: Vec<f64>,
    agents: Vec<String>,
    free_betas: bool,
}

impl ReducedFit {
    fn params(&self, dim: usize) -> JointParams {
        let mut theta_b = BTreeMap::new();
        for (agent, &beta) in self.agents.iter().zip(&self.betas) {
            let mut v = bias_vector(dim);
            v[0] = beta;
            theta_b.insert(agent.clone(), v);
        }
        JointParams::new(self.theta_r.clone(), theta_b)
    }

    /// Projected gradient: beta components pinned at zero only count
    /// when they push inward.
    fn projected_grad(&self, g_r: &[f64], g_b: &[f64]) -> f64 {
        let mut sq = math::dot(g_r, g_r);
        if self.free_betas {
            for (&beta, &g) in self.betas.iter().zip(g_b) {
                let eff = if beta > 0.0 { g } else { g.min(0.0) };
                sq += eff * eff;
            }
        }
        sq.sqrt()
    }
}

fn fit_reduced(
    data: &Dataset,
    prior: &Prior,
    cfg: &OptConfig,
    model: RosterModel,
) -> Result<FittedModel> {
    let spec = data.spec();
    require_bias_feature(spec)?;
    let dim = spec.feature_dim();
    let free_betas = model == RosterModel::BrPerAgent;
    let mut state = ReducedFit {
        theta_r: vec![0.0; dim],
        betas: vec![1.0; data.n_agents()],
        agents: data.agent_ids().cloned().collect(),
        free_betas,
    };
    let mut warnings = Vec::new();
    let mut value = objective(data, &state.params(dim), prior)?;
    if !value.is_finite() {
        return Err(CliError::Invalid(format!(
            "objective is not finite at the initial point ({value})"
        )));
    }
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let params = state.params(dim);
        let grad = gradient(data, &params, prior)?;
        let g_b: Vec<f64> = state.agents.iter().map(|a| grad.theta_b[a][0]).collect();
        if state.projected_grad(&grad.theta_r, &g_b) <= cfg.tol {
            converged = true;
            break;
        }
        let mut step = cfg.step_size;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let candidate_r: Vec<f64> = state
                .theta_r
                .iter()
                .zip(&grad.theta_r)
                .map(|(x, g)| x - step * g)
                .collect();
            let candidate_b: Vec<f64> = if free_betas {
                state
                    .betas
                    .iter()
                    .zip(&g_b)
                    .map(|(b, g)| (b - step * g).max(0.0))
                    .collect()
            } else {
                state.betas.clone()
            };
            let trial = ReducedFit {
                theta_r: candidate_r,
                betas: candidate_b,
                agents: state.agents.clone(),
                free_betas,
            };
            // Sufficient decrease along the actually realized
            // (projected) displacement.
            let mut descent = 0.0;
            for (g, (new, old)) in grad
                .theta_r
                .iter()
                .zip(trial.theta_r.iter().zip(&state.theta_r))
            {
                descent += g * (new - old);
            }
            for (g, (new, old)) in g_b.iter().zip(trial.betas.iter().zip(&state.betas)) {
                descent += g * (new - old);
            }
            let trial_value = objective(data, &trial.params(dim), prior)?;
            if trial_value.is_finite() && trial_value <= value + ARMIJO_C1 * descent {
                state = trial;
                value = trial_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            warnings.push(format!(
                "line search stalled at iteration {iterations}; returning the best point so far"
            ));
            break;
        }
    }
    if !converged && iterations == cfg.max_iters {
        warnings.push(format!(
            "iteration cap {} reached before the tolerance",
            cfg.max_iters
        ));
    }
    if free_betas {
        // Report in the scale-fixed gauge: root-mean-square rationality
        // one, the compensating scale folded into the cost weights.
        let rms = (state.betas.iter().map(|b| b * b).sum::<f64>()
            / state.betas.len().max(1) as f64)
            .sqrt();
        if rms > 1e-12 {
            for b in &mut state.betas {
                *b /= rms;
            }
            for r in &mut state.theta_r {
                *r *= rms;
            }
        } else {
            warnings.push("all per-agent rationality scales collapsed to zero".to_string());
        }
    }
    Ok(FittedModel {
        model,
        params: Some(state.params(dim)),
        objective: value,
        converged,
        iterations,
        warnings,
    })
}

/// Fit the shared-constant-rationality reduction (cost weights only;
/// the scale of the cost weights carries the rationality).
pub fn fit_br_aggregate(data: &Dataset, prior: &Prior, cfg: &OptConfig) -> Result<FittedModel> {
    fit_reduced(data, prior, cfg, RosterModel::BrAggregate)
}

/// Fit the per-agent constant-rationality reduction (cost weights plus
/// one nonnegative scalar per agent).
pub fn fit_br_per_agent(data: &Dataset, prior: &Prior, cfg: &OptConfig) -> Result<FittedModel> {
    fit_reduced(data, prior, cfg, RosterModel::BrPerAgent)
}

/// The uniform reference; nothing to fit.
pub fn uniform_model() -> FittedModel {
    FittedModel {
        model: RosterModel::Uniform,
        params: None,
        objective: f64::NAN,
        converged: true,
        iterations: 0,
        warnings: Vec::new(),
    }
}

/// Summed cost of a state sequence under given cost weights.
pub fn states_cost(spec: &GridSpec, theta_r: &[f64], states: &[State]) -> Result<f64> {
    let mut total = 0.0;
    for &s in states {
        total += math::dot(theta_r, spec.phi(s)?);
    }
    Ok(total)
}

/// Mean per-step cross-entropy and step count of a model on held-out
/// trajectories (actions required). The uniform model scores `ln 5`.
pub fn held_out_cross_entropy(
    spec: &GridSpec,
    fitted: &FittedModel,
    test: &Dataset,
) -> Result<(f64, usize)> {
    let mut steps = 0usize;
    let mut total = 0.0;
    match &fitted.params {
        None => {
            for (_, agent_data) in test.agents() {
                for traj in agent_data.trajectories() {
                    steps += traj.len();
                }
            }
            Ok((uniform_cross_entropy(), steps))
        }
        Some(params) => {
            for (agent, agent_data) in test.agents() {
                let agent_params = params.agent_params(agent).ok_or_else(|| {
                    CliError::Invalid(format!("fitted model covers no agent {agent:?}"))
                })?;
                let backup = log_partition(spec, &agent_params)?;
                for traj in agent_data.trajectories() {
                    let actions = traj.actions.as_ref().ok_or_else(|| {
                        CliError::Invalid("held-out scoring needs recorded actions".to_string())
                    })?;
                    for (t, action) in actions.iter().enumerate() {
                        let lp =
                            step_action_log_probs(spec, &agent_params, &backup, t, traj.states[t])?
                                [action.index()];
                        total -= lp;
                        steps += 1;
                    }
                }
            }
            if steps == 0 {
                return Ok((f64::NAN, 0));
            }
            Ok((total / steps as f64, steps))
        }
    }
}

/// Gap between the summed per-step conditionals and the whole-path
/// log-probability; zero up to rounding for any parameters.
pub fn chain_rule_gap(spec: &GridSpec, params: &BsdrParams, traj: &Trajectory) -> Result<f64> {
    let backup = log_partition(spec, params)?;
    let actions = traj.actions.as_ref().ok_or_else(|| {
        CliError::Invalid("the chain-rule check needs recorded actions".to_string())
    })?;
    let mut sum = 0.0;
    for (t, action) in actions.iter().enumerate() {
        sum += step_action_log_probs(spec, params, &backup, t, traj.states[t])?[action.index()];
    }
    Ok((sum - traj_log_prob(spec, params, &backup, traj)?).abs())
}
