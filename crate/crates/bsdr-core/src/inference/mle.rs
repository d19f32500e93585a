//! Joint parameter fitting: gradient descent on the negative log
//! posterior with per-agent unit-norm gauge fixing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::inference::likelihood::{Dataset, JointParams};
use crate::inference::posterior::Prior;
use crate::math;
use crate::model::{expected_features, BsdrParams, FeatureCounts, SoftBackup};
use crate::{Error, Result};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MIN_GAUGE_NORM: f64 = 1e-12;

/// Gradient of the fitting objective, one block per parameter vector.
#[derive(Debug, Clone)]
pub struct JointGrad {
    pub theta_r: Vec<f64>,
    pub theta_b: BTreeMap<String, Vec<f64>>,
}

impl JointGrad {
    /// Euclidean norm over all blocks.
    pub fn norm(&self) -> f64 {
        let mut sq = math::dot(&self.theta_r, &self.theta_r);
        for g in self.theta_b.values() {
            sq += math::dot(g, g);
        }
        math::sqrt(sq)
    }
}

/// Optimizer settings: initial line-search step, iteration cap,
/// gradient-norm tolerance, gauge choice, and optional starting point.
#[derive(Debug, Clone)]
pub struct OptConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Renormalize every rationality vector to unit length after each
    /// step, folding the compensating scale into the cost weights.
    pub gauge_fix: bool,
    /// Starting point; `None` means zero cost weights and a bias-only
    /// unit rationality vector per agent.
    pub init: Option<JointParams>,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            step_size: 1.0,
            max_iters: 5000,
            tol: 1e-6,
            gauge_fix: true,
            init: None,
        }
    }
}

/// Convergence record of one fit.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    /// Accepted descent steps.
    pub iterations: usize,
    /// Whether the (projected) gradient norm reached the tolerance.
    pub converged: bool,
    /// Gradient norm at the returned point.
    pub grad_norm: f64,
    /// Objective value at the start and after every accepted step;
    /// non-increasing.
    pub objective_trace: Vec<f64>,
    /// Non-fatal conditions (iteration cap, stalled line search).
    pub warnings: Vec<String>,
}

/// Fitted parameters plus the objective and data log-likelihood at the
/// solution.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: JointParams,
    pub objective: f64,
    pub log_likelihood: f64,
    pub diagnostics: FitDiagnostics,
}

/// The minimized objective: negative data log-likelihood minus log
/// prior.
pub fn objective(data: &Dataset, params: &JointParams, prior: &Prior) -> Result<f64> {
    Ok(evaluate(data, params, prior, false)?.0)
}

/// Euclidean gradient of [`objective`] in every parameter block.
pub fn gradient(data: &Dataset, params: &JointParams, prior: &Prior) -> Result<JointGrad> {
    Ok(evaluate(data, params, prior, true)?
        .1
        .expect("gradient requested"))
}

/// One pass over the corpus computing the objective and optionally its
/// gradient, with one backup (and one expectation, when the gradient is
/// wanted) per distinct rationality vector.
fn evaluate(
    data: &Dataset,
    params: &JointParams,
    prior: &Prior,
    want_grad: bool,
) -> Result<(f64, Option<JointGrad>)> {
    params.validate_for(data)?;
    prior.validate()?;
    let spec = data.spec();

    let mut objective = -prior.log_density(params);
    let mut grad_r = if want_grad {
        let mut g = prior.grad_block(&params.theta_r);
        for x in &mut g {
            *x = -*x;
        }
        Some(g)
    } else {
        None
    };
    let mut grad_b: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    let mut cache: BTreeMap<Vec<u64>, (f64, Option<FeatureCounts>)> = BTreeMap::new();
    for (agent, group) in data.agents() {
        let tb = &params.theta_b[agent];
        let key: Vec<u64> = tb.iter().map(|x| x.to_bits()).collect();
        if !cache.contains_key(&key) {
            let ap = BsdrParams::new(params.theta_r.clone(), tb.clone());
            let backup = SoftBackup::compute(spec, &ap)?;
            let e_phi = if want_grad {
                Some(expected_features(spec, &ap, &backup)?.phi)
            } else {
                None
            };
            cache.insert(key.clone(), (backup.log_partition(), e_phi));
        }
        let (log_z, e_phi) = &cache[&key];
        let n_i = group.len() as f64;
        objective += group.phi_total().bilinear(tb, &params.theta_r) + n_i * log_z;
        if want_grad {
            let mut diff = group.phi_total().clone();
            diff.scaled_add(e_phi.as_ref().expect("expectation cached"), -n_i);
            let gr = grad_r.as_mut().expect("gradient block allocated");
            for (g, d) in gr.iter_mut().zip(diff.mat_vec(tb)) {
                *g += d;
            }
            let mut gb = diff.mat_vec(&params.theta_r);
            let prior_gb = prior.grad_block(tb);
            for (g, p) in gb.iter_mut().zip(prior_gb) {
                *g -= p;
            }
            grad_b.insert(agent.clone(), gb);
        }
    }
    let grad = if want_grad {
        Some(JointGrad {
            theta_r: grad_r.expect("gradient block allocated"),
            theta_b: grad_b,
        })
    } else {
        None
    };
    Ok((objective, grad))
}

/// Remove the radial component of each rationality-block gradient so the
/// step moves tangentially to the unit spheres.
fn project_tangent(grad: &JointGrad, params: &JointParams) -> JointGrad {
    let mut theta_b = BTreeMap::new();
    for (agent, g) in &grad.theta_b {
        let tb = &params.theta_b[agent];
        let radial = math::dot(g, tb);
        theta_b.insert(
            agent.clone(),
            g.iter().zip(tb).map(|(gi, ti)| gi - radial * ti).collect(),
        );
    }
    JointGrad {
        theta_r: grad.theta_r.clone(),
        theta_b,
    }
}

/// Take a step against the gradient and, under gauge fixing, renormalize
/// each rationality vector with the geometric-mean compensation folded
/// into the cost weights. `None` when a rationality vector collapses.
fn retract(
    params: &JointParams,
    grad: &JointGrad,
    step: f64,
    gauge_fix: bool,
) -> Option<JointParams> {
    let mut theta_r: Vec<f64> = params
        .theta_r
        .iter()
        .zip(&grad.theta_r)
        .map(|(x, g)| x - step * g)
        .collect();
    let mut theta_b = BTreeMap::new();
    let mut log_norm_sum = 0.0;
    for (agent, tb) in &params.theta_b {
        let g = &grad.theta_b[agent];
        let raw: Vec<f64> = tb.iter().zip(g).map(|(x, gi)| x - step * gi).collect();
        if gauge_fix {
            // A NaN norm must also reject the step, so test the passing side.
            let norm = math::norm(&raw);
            let usable = norm > MIN_GAUGE_NORM;
            if !usable {
                return None;
            }
            theta_b.insert(agent.clone(), raw.iter().map(|x| x / norm).collect());
            log_norm_sum += math::ln(norm);
        } else {
            theta_b.insert(agent.clone(), raw);
        }
    }
    if gauge_fix && !params.theta_b.is_empty() {
        let scale = math::exp(log_norm_sum / params.theta_b.len() as f64);
        for x in &mut theta_r {
            *x *= scale;
        }
    }
    Some(JointParams::new(theta_r, theta_b))
}

/// Normalize every rationality vector of a starting point, folding the
/// geometric-mean scale into the cost weights.
fn gauge_normalize(params: &JointParams) -> Result<JointParams> {
    let mut theta_b = BTreeMap::new();
    let mut log_norm_sum = 0.0;
    for (agent, tb) in &params.theta_b {
        let norm = math::norm(tb);
        if norm <= MIN_GAUGE_NORM {
            return Err(Error::InvalidParams(format!(
                "rationality vector for agent {agent:?} cannot be gauge-normalized"
            )));
        }
        theta_b.insert(agent.clone(), tb.iter().map(|x| x / norm).collect());
        log_norm_sum += math::ln(norm);
    }
    let mut theta_r = params.theta_r.clone();
    if !params.theta_b.is_empty() {
        let scale = math::exp(log_norm_sum / params.theta_b.len() as f64);
        for x in &mut theta_r {
            *x *= scale;
        }
    }
    Ok(JointParams::new(theta_r, theta_b))
}

fn default_init(data: &Dataset) -> JointParams {
    let dim = data.spec().feature_dim();
    let mut e0 = vec![0.0; dim];
    e0[0] = 1.0;
    let theta_b = data
        .agent_ids()
        .map(|id| (id.clone(), e0.clone()))
        .collect();
    JointParams::new(vec![0.0; dim], theta_b)
}

/// Fit joint parameters by backtracking gradient descent.
///
/// Starts from `cfg.init` (or the default start), descends the
/// [`objective`], and under gauge fixing keeps every rationality vector
/// unit-length. Stops when the (projected) gradient norm falls below
/// `cfg.tol`; hitting the iteration cap or a stalled line search returns
/// the best point found with a warning instead of an error.
pub fn mle_fit(data: &Dataset, prior: &Prior, cfg: &OptConfig) -> Result<FitResult> {
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "step size must be positive and finite, got {}",
            cfg.step_size
        )));
    }
    if cfg.tol.is_nan() || cfg.tol < 0.0 {
        return Err(Error::InvalidParams(format!(
            "tolerance must be nonnegative, got {}",
            cfg.tol
        )));
    }
    let mut params = match &cfg.init {
        Some(p) => {
            p.validate_for(data)?;
            if cfg.gauge_fix {
                gauge_normalize(p)?
            } else {
                p.clone()
            }
        }
        None => default_init(data),
    };

    let mut current = objective(data, &params, prior)?;
    let mut trace = vec![current];
    if !current.is_finite() {
        return Err(Error::Diverged(format!(
            "objective is not finite at the starting point (trace: {trace:?})"
        )));
    }

    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::NAN;

    while iterations < cfg.max_iters {
        let (_, grad) = evaluate(data, &params, prior, true)?;
        let grad = grad.expect("gradient requested");
        let pg = if cfg.gauge_fix {
            project_tangent(&grad, &params)
        } else {
            grad
        };
        grad_norm = pg.norm();
        if grad_norm < cfg.tol {
            converged = true;
            break;
        }

        let mut step = cfg.step_size;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if let Some(cand) = retract(&params, &pg, step, cfg.gauge_fix) {
                let value = objective(data, &cand, prior)?;
                if value.is_finite() && value <= current - ARMIJO_C1 * step * grad_norm * grad_norm
                {
                    accepted = Some((cand, value));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, value)) => {
                params = cand;
                current = value;
                trace.push(value);
                iterations += 1;
            }
            None => {
                warnings.push("line search stalled; returning the best point found".to_string());
                break;
            }
        }
    }

    if !converged {
        // Report the gradient norm at the point actually returned.
        let (_, grad) = evaluate(data, &params, prior, true)?;
        let grad = grad.expect("gradient requested");
        let pg = if cfg.gauge_fix {
            project_tangent(&grad, &params)
        } else {
            grad
        };
        grad_norm = pg.norm();
        if grad_norm < cfg.tol {
            converged = true;
        } else if warnings.is_empty() {
            warnings.push("iteration cap reached before convergence".to_string());
        }
    }

    let log_likelihood = crate::inference::likelihood::dataset_log_likelihood(data, &params)?;
    Ok(FitResult {
        params,
        objective: current,
        log_likelihood,
        diagnostics: FitDiagnostics {
            iterations,
            converged,
            grad_norm,
            objective_trace: trace,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FeatureMap, GridSpec, State, Trajectory};
    use crate::model::traj_log_prob;
    use approx::assert_relative_eq;

    fn line_world(horizon: usize) -> GridSpec {
        GridSpec::new(
            2,
            1,
            &[],
            (0, 0),
            &[(1, 0)],
            horizon,
            FeatureMap::BiasGoalDist,
        )
        .unwrap()
    }

    fn go_right(horizon: usize) -> Trajectory {
        let mut states = vec![State::new(0, 0)];
        for _ in 0..horizon {
            states.push(State::new(1, 0));
        }
        Trajectory::new(states)
    }

    fn two_agent_data() -> Dataset {
        let spec = line_world(2);
        let stay = Trajectory::new(vec![State::new(0, 0), State::new(0, 0), State::new(0, 0)]);
        let mut groups = BTreeMap::new();
        groups.insert("a0".to_string(), vec![go_right(2), go_right(2)]);
        groups.insert("a1".to_string(), vec![stay]);
        Dataset::new(spec, groups).unwrap()
    }

    fn fd_params() -> JointParams {
        let mut theta_b = BTreeMap::new();
        theta_b.insert("a0".to_string(), vec![0.8, 0.4]);
        theta_b.insert("a1".to_string(), vec![1.1, -0.2]);
        JointParams::new(vec![0.3, -0.7], theta_b)
    }

    fn perturbed(base: &JointParams, block: Option<&str>, coord: usize, delta: f64) -> JointParams {
        let mut p = base.clone();
        match block {
            None => p.theta_r[coord] += delta,
            Some(agent) => p.theta_b.get_mut(agent).unwrap()[coord] += delta,
        }
        p
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data = two_agent_data();
        let params = fd_params();
        let prior = Prior::Gaussian { sigma: 2.0 };
        let grad = gradient(&data, &params, &prior).unwrap();
        let h = 1e-5;
        let mut checks: Vec<(Option<&str>, usize, f64)> = Vec::new();
        for i in 0..2 {
            checks.push((None, i, grad.theta_r[i]));
            checks.push((Some("a0"), i, grad.theta_b["a0"][i]));
            checks.push((Some("a1"), i, grad.theta_b["a1"][i]));
        }
        for (block, coord, analytic) in checks {
            let plus = objective(&data, &perturbed(&params, block, coord, h), &prior).unwrap();
            let minus = objective(&data, &perturbed(&params, block, coord, -h), &prior).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                ((analytic - fd) / denom).abs() < 1e-4,
                "block {block:?} coord {coord}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn objective_matches_negative_likelihood_plus_prior() {
        let data = two_agent_data();
        let params = fd_params();
        let prior = Prior::Gaussian { sigma: 2.0 };
        let j = objective(&data, &params, &prior).unwrap();
        let ll = crate::inference::likelihood::dataset_log_likelihood(&data, &params).unwrap();
        assert_relative_eq!(j, -ll - prior.log_density(&params), max_relative = 1e-12);
    }

    #[test]
    fn descent_is_monotone_and_recovers_goal_seeking() {
        let spec = line_world(2);
        let data = Dataset::single_agent(
            spec.clone(),
            "a0",
            vec![go_right(2), go_right(2), go_right(2)],
        )
        .unwrap();
        let fit = mle_fit(
            &data,
            &Prior::Gaussian { sigma: 10.0 },
            &OptConfig::default(),
        )
        .unwrap();
        let trace = &fit.diagnostics.objective_trace;
        assert!(
            trace.windows(2).all(|w| w[1] <= w[0]),
            "trace not monotone: {trace:?}"
        );
        assert!(fit.diagnostics.converged);
        assert_relative_eq!(
            math::norm(&fit.params.theta_b["a0"]),
            1.0,
            max_relative = 1e-12
        );
        // The fitted model should like the observed trajectory more than
        // the uniform model does.
        let ap = fit.params.agent_params("a0").unwrap();
        let backup = SoftBackup::compute(&spec, &ap).unwrap();
        let fitted = traj_log_prob(&spec, &ap, &backup, &go_right(2)).unwrap();
        let uniform_params = BsdrParams::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        let ub = SoftBackup::compute(&spec, &uniform_params).unwrap();
        let uniform = traj_log_prob(&spec, &uniform_params, &ub, &go_right(2)).unwrap();
        assert!(fitted > uniform, "fitted {fitted} vs uniform {uniform}");
    }

    #[test]
    fn iteration_cap_returns_best_so_far_with_warning() {
        let data = two_agent_data();
        let cfg = OptConfig {
            max_iters: 1,
            ..OptConfig::default()
        };
        let fit = mle_fit(&data, &Prior::Gaussian { sigma: 10.0 }, &cfg).unwrap();
        assert!(!fit.diagnostics.converged);
        assert!(!fit.diagnostics.warnings.is_empty());
        assert_eq!(fit.diagnostics.iterations, 1);
        assert_eq!(fit.diagnostics.objective_trace.len(), 2);
        assert!(fit.objective.is_finite());
    }

    #[test]
    fn init_is_respected_and_normalized() {
        let data = two_agent_data();
        let mut theta_b = BTreeMap::new();
        theta_b.insert("a0".to_string(), vec![2.0, 0.0]);
        theta_b.insert("a1".to_string(), vec![0.0, 2.0]);
        let init = JointParams::new(vec![0.5, -0.5], theta_b);
        let cfg = OptConfig {
            max_iters: 0,
            init: Some(init),
            ..OptConfig::default()
        };
        let fit = mle_fit(&data, &Prior::UniformGrid, &cfg).unwrap();
        // Both rationality vectors were normalized from length 2, so the
        // compensating scale on the cost weights is exactly 2.
        assert_eq!(fit.params.theta_b["a0"], vec![1.0, 0.0]);
        assert_eq!(fit.params.theta_b["a1"], vec![0.0, 1.0]);
        assert_eq!(fit.params.theta_r, vec![1.0, -1.0]);
    }

    #[test]
    fn empty_dataset_converges_at_the_prior_mode() {
        let data = Dataset::empty(line_world(1));
        let fit = mle_fit(
            &data,
            &Prior::Gaussian { sigma: 10.0 },
            &OptConfig::default(),
        )
        .unwrap();
        assert!(fit.diagnostics.converged);
        assert_eq!(fit.diagnostics.iterations, 0);
        assert_eq!(fit.params.theta_r, vec![0.0, 0.0]);
        assert_eq!(fit.log_likelihood, 0.0);
    }

    #[test]
    fn zero_rationality_init_is_rejected_under_gauge_fixing() {
        let data = two_agent_data();
        let mut theta_b = BTreeMap::new();
        theta_b.insert("a0".to_string(), vec![0.0, 0.0]);
        theta_b.insert("a1".to_string(), vec![1.0, 0.0]);
        let cfg = OptConfig {
            init: Some(JointParams::new(vec![0.0, 0.0], theta_b)),
            ..OptConfig::default()
        };
        assert!(matches!(
            mle_fit(&data, &Prior::UniformGrid, &cfg),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn unconstrained_descent_also_descends() {
        let data = two_agent_data();
        let cfg = OptConfig {
            gauge_fix: false,
            max_iters: 50,
            ..OptConfig::default()
        };
        let fit = mle_fit(&data, &Prior::Gaussian { sigma: 5.0 }, &cfg).unwrap();
        let trace = &fit.diagnostics.objective_trace;
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.last().unwrap() < trace.first().unwrap());
    }
}
