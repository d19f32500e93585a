//! Discretized Bayesian posteriors over parameter grids, and goal
//! inference from trajectory prefixes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{GridSpec, State};
use crate::inference::likelihood::{
    dataset_log_likelihood, prefix_log_likelihood, Dataset, JointParams,
};
use crate::math;
use crate::model::{BsdrParams, SoftBackup};
use crate::{Error, Result};

/// Default ceiling on the number of grid points a posterior evaluation
/// may touch.
pub const DEFAULT_GRID_BUDGET: u128 = 1_000_000;

/// Prior over joint parameters.
///
/// `UniformGrid` is flat over whatever grid it is evaluated on;
/// `UnitSphereUniform` is the constant prior used with unit-norm
/// rationality vectors (flat as a log-density); `Gaussian` is an
/// isotropic zero-mean density with scale `sigma` applied to every
/// coordinate of θ_R and of each θ_β^i.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    UniformGrid,
    UnitSphereUniform,
    Gaussian { sigma: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        if let Prior::Gaussian { sigma } = self {
            if !sigma.is_finite() || *sigma <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "gaussian prior scale must be positive and finite, got {sigma}"
                )));
            }
        }
        Ok(())
    }

    /// Unnormalized log-density at a joint parameter point.
    pub fn log_density(&self, params: &JointParams) -> f64 {
        match self {
            Prior::UniformGrid | Prior::UnitSphereUniform => 0.0,
            Prior::Gaussian { sigma } => {
                let mut sq = math::dot(&params.theta_r, &params.theta_r);
                for tb in params.theta_b.values() {
                    sq += math::dot(tb, tb);
                }
                -sq / (2.0 * sigma * sigma)
            }
        }
    }

    /// `∇ log prior` for one parameter block.
    pub fn grad_block(&self, block: &[f64]) -> Vec<f64> {
        match self {
            Prior::UniformGrid | Prior::UnitSphereUniform => vec![0.0; block.len()],
            Prior::Gaussian { sigma } => {
                let inv = -1.0 / (sigma * sigma);
                block.iter().map(|x| x * inv).collect()
            }
        }
    }
}

/// Per-coordinate candidate value lists for every parameter block: `D`
/// lists for θ_R and `D` lists per agent for θ_β^i. The Cartesian
/// product of all lists is the evaluation grid; the flat index runs with
/// the first axis most significant (θ_R coordinates first, then agents
/// in id order).
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub theta_r: Vec<Vec<f64>>,
    pub theta_b: BTreeMap<String, Vec<Vec<f64>>>,
}

impl GridAxes {
    /// Check the axes against a dataset: axis-list lengths equal the
    /// feature dimension, every axis nonempty with finite values, and
    /// every agent with data covered. Axes for agents absent from the
    /// dataset are allowed — with no evidence, their posterior is the
    /// prior.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        let dim = data.spec().feature_dim();
        validate_block(&self.theta_r, dim, "theta_r")?;
        for (agent, axes) in &self.theta_b {
            validate_block(axes, dim, agent)?;
        }
        for agent in data.agent_ids() {
            if !self.theta_b.contains_key(agent) {
                return Err(Error::AgentMismatch(format!(
                    "dataset has agent {agent:?} with no grid axes"
                )));
            }
        }
        Ok(())
    }

    /// Total number of grid points (product of axis lengths).
    pub fn n_points(&self) -> u128 {
        let mut n: u128 = 1;
        for axis in self.axis_list() {
            n = n.saturating_mul(axis.len() as u128);
        }
        n
    }

    /// Number of axes (coordinates) in flat order.
    pub fn n_axes(&self) -> usize {
        self.theta_r.len() + self.theta_b.values().map(|axes| axes.len()).sum::<usize>()
    }

    /// Human-readable axis labels in flat order.
    pub fn axis_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n_axes());
        for i in 0..self.theta_r.len() {
            labels.push(format!("theta_r[{i}]"));
        }
        for (agent, axes) in &self.theta_b {
            for i in 0..axes.len() {
                labels.push(format!("theta_b[{agent}][{i}]"));
            }
        }
        labels
    }

    fn axis_list(&self) -> Vec<&Vec<f64>> {
        let mut axes = Vec::with_capacity(self.n_axes());
        for axis in &self.theta_r {
            axes.push(axis);
        }
        for agent_axes in self.theta_b.values() {
            for axis in agent_axes {
                axes.push(axis);
            }
        }
        axes
    }

    /// Per-axis value indices of a flat grid index.
    pub fn decode(&self, flat: usize) -> Vec<usize> {
        let axes = self.axis_list();
        let mut idx = vec![0usize; axes.len()];
        let mut rest = flat;
        for (j, axis) in axes.iter().enumerate().rev() {
            idx[j] = rest % axis.len();
            rest /= axis.len();
        }
        debug_assert_eq!(rest, 0, "flat index out of range");
        idx
    }

    /// The joint parameter point at a flat grid index.
    pub fn params_at(&self, flat: usize) -> JointParams {
        let axes = self.axis_list();
        let idx = self.decode(flat);
        let mut values = Vec::with_capacity(axes.len());
        for (j, axis) in axes.iter().enumerate() {
            values.push(axis[idx[j]]);
        }
        let d = self.theta_r.len();
        let theta_r = values[..d].to_vec();
        let mut theta_b = BTreeMap::new();
        let mut offset = d;
        for (agent, agent_axes) in &self.theta_b {
            let w = agent_axes.len();
            theta_b.insert(agent.clone(), values[offset..offset + w].to_vec());
            offset += w;
        }
        JointParams::new(theta_r, theta_b)
    }
}

fn validate_block(axes: &[Vec<f64>], dim: usize, name: &str) -> Result<()> {
    if axes.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: axes.len(),
        });
    }
    for axis in axes {
        if axis.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if axis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "grid axis for {name} has a non-finite value"
            )));
        }
    }
    Ok(())
}

/// Normalized log-posterior over a parameter grid.
#[derive(Debug, Clone)]
pub struct PosteriorGrid {
    axes: GridAxes,
    log_posterior: Vec<f64>,
    log_normalizer: f64,
}

impl PosteriorGrid {
    pub fn axes(&self) -> &GridAxes {
        &self.axes
    }

    /// Normalized log-mass per flat grid index; `Σ exp(·) = 1`.
    pub fn log_posterior(&self) -> &[f64] {
        &self.log_posterior
    }

    /// Log of the summed unnormalized mass (the evidence up to the grid
    /// measure).
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn len(&self) -> usize {
        self.log_posterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_posterior.is_empty()
    }

    pub fn params_at(&self, flat: usize) -> JointParams {
        self.axes.params_at(flat)
    }

    /// Flat index of the maximum-posterior point; exact ties resolve to
    /// the smallest index.
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.log_posterior.iter().enumerate() {
            if v > self.log_posterior[best] {
                best = i;
            }
        }
        best
    }

    pub fn map_params(&self) -> JointParams {
        self.params_at(self.map_index())
    }

    /// Marginal probability over one axis (summing mass over all others).
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let axes = self.axes.axis_list();
        assert!(axis < axes.len(), "axis index out of range");
        let mut out = vec![0.0; axes[axis].len()];
        for (flat, &lp) in self.log_posterior.iter().enumerate() {
            let idx = self.axes.decode(flat);
            out[idx[axis]] += math::exp(lp);
        }
        out
    }

    /// All per-axis marginals in flat-axis order.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        (0..self.axes.n_axes()).map(|a| self.marginal(a)).collect()
    }

    /// Total posterior mass on points satisfying a predicate.
    pub fn mass_where(&self, pred: impl Fn(&JointParams) -> bool) -> f64 {
        let mut mass = 0.0;
        for (flat, &lp) in self.log_posterior.iter().enumerate() {
            if pred(&self.params_at(flat)) {
                mass += math::exp(lp);
            }
        }
        mass
    }
}

/// Unnormalized log-posterior (log-likelihood plus log-prior) at a point.
///
/// The likelihood is scored with the parameters restricted to agents
/// the dataset actually contains; rationality vectors for other agents
/// contribute only through the prior.
pub fn log_unnorm_posterior(data: &Dataset, params: &JointParams, prior: &Prior) -> Result<f64> {
    prior.validate()?;
    let scored: JointParams;
    let with_data = if params.theta_b.keys().all(|a| data.agent(a).is_some()) {
        params
    } else {
        scored = JointParams::new(
            params.theta_r.clone(),
            params
                .theta_b
                .iter()
                .filter(|(a, _)| data.agent(a).is_some())
                .map(|(a, tb)| (a.clone(), tb.clone()))
                .collect(),
        );
        &scored
    };
    Ok(dataset_log_likelihood(data, with_data)? + prior.log_density(params))
}

/// Evaluate the posterior over the full grid within an explicit budget.
pub fn grid_posterior_budgeted(
    data: &Dataset,
    axes: &GridAxes,
    prior: &Prior,
    budget: u128,
) -> Result<PosteriorGrid> {
    axes.validate_for(data)?;
    prior.validate()?;
    let n = axes.n_points();
    if n == 0 {
        return Err(Error::EmptyGrid);
    }
    if n > budget {
        return Err(Error::BudgetExceeded {
            requested: n,
            budget,
        });
    }
    let mut log_values = Vec::with_capacity(n as usize);
    for flat in 0..n as usize {
        let params = axes.params_at(flat);
        log_values.push(log_unnorm_posterior(data, &params, prior)?);
    }
    posterior_from_log_values(axes.clone(), log_values)
}

/// [`grid_posterior_budgeted`] with the default budget.
pub fn grid_posterior(data: &Dataset, axes: &GridAxes, prior: &Prior) -> Result<PosteriorGrid> {
    grid_posterior_budgeted(data, axes, prior, DEFAULT_GRID_BUDGET)
}

/// Normalize externally computed unnormalized log-posterior values (the
/// assembly step for data-parallel grid evaluation).
pub fn posterior_from_log_values(axes: GridAxes, log_values: Vec<f64>) -> Result<PosteriorGrid> {
    let n = axes.n_points();
    if n == 0 || log_values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if n != log_values.len() as u128 {
        return Err(Error::DimensionMismatch {
            expected: n as usize,
            got: log_values.len(),
        });
    }
    let log_normalizer = math::log_sum_exp(&log_values);
    if !log_normalizer.is_finite() {
        return Err(Error::Diverged(
            "posterior normalizer is not finite".to_string(),
        ));
    }
    let log_posterior = log_values.into_iter().map(|v| v - log_normalizer).collect();
    Ok(PosteriorGrid {
        axes,
        log_posterior,
        log_normalizer,
    })
}

/// Posterior over candidate goals given an observed state prefix.
///
/// Each candidate is the same board with a different goal list; the
/// reward template and rationality vector are fixed and re-read through
/// each candidate's feature map. Returns probabilities aligned with the
/// candidates.
pub fn goal_posterior(
    candidates: &[GridSpec],
    goal_prior: &[f64],
    theta_r: &[f64],
    theta_b: &[f64],
    prefix: &[State],
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::InvalidCandidates("no goal candidates".to_string()));
    }
    if goal_prior.len() != candidates.len() {
        return Err(Error::InvalidCandidates(format!(
            "{} candidates but {} prior entries",
            candidates.len(),
            goal_prior.len()
        )));
    }
    if goal_prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidCandidates(
            "goal prior entries must be finite and nonnegative".to_string(),
        ));
    }
    if goal_prior.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidCandidates(
            "goal prior has no mass".to_string(),
        ));
    }
    let first = &candidates[0];
    for cand in candidates.iter().skip(1) {
        let same = cand.width() == first.width()
            && cand.height() == first.height()
            && cand.valid_states() == first.valid_states()
            && cand.start() == first.start()
            && cand.horizon() == first.horizon()
            && cand.feature_map() == first.feature_map()
            && cand.feature_dim() == first.feature_dim();
        if !same {
            return Err(Error::InvalidCandidates(
                "goal candidates must share layout, start, horizon, and feature map".to_string(),
            ));
        }
    }

    let mut log_weights = Vec::with_capacity(candidates.len());
    for (cand, &prior) in candidates.iter().zip(goal_prior.iter()) {
        if prior == 0.0 {
            log_weights.push(f64::NEG_INFINITY);
            continue;
        }
        let params = BsdrParams::new(theta_r.to_vec(), theta_b.to_vec());
        let backup = SoftBackup::compute(cand, &params)?;
        let ll = prefix_log_likelihood(cand, &params, &backup, prefix)?;
        log_weights.push(math::ln(prior) + ll);
    }
    let total = math::log_sum_exp(&log_weights);
    if !total.is_finite() {
        return Err(Error::Diverged(
            "goal posterior normalizer is not finite".to_string(),
        ));
    }
    Ok(log_weights
        .into_iter()
        .map(|w| math::exp(w - total))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FeatureMap, Trajectory};
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

    fn single_agent_axes(theta_r: Vec<Vec<f64>>, agent: &str, theta_b: Vec<Vec<f64>>) -> GridAxes {
        let mut map = BTreeMap::new();
        map.insert(agent.to_string(), theta_b);
        GridAxes {
            theta_r,
            theta_b: map,
        }
    }

    #[test]
    fn flat_index_walks_first_axis_slowest() {
        let axes = single_agent_axes(
            vec![vec![0.0, 1.0], vec![5.0]],
            "a0",
            vec![vec![7.0], vec![2.0, 3.0, 4.0]],
        );
        assert_eq!(axes.n_points(), 6);
        assert_eq!(axes.n_axes(), 4);
        assert_eq!(
            axes.axis_labels(),
            vec![
                "theta_r[0]",
                "theta_r[1]",
                "theta_b[a0][0]",
                "theta_b[a0][1]"
            ]
        );
        let p0 = axes.params_at(0);
        assert_eq!(p0.theta_r, vec![0.0, 5.0]);
        assert_eq!(p0.theta_b["a0"], vec![7.0, 2.0]);
        let p2 = axes.params_at(2);
        assert_eq!(p2.theta_r, vec![0.0, 5.0]);
        assert_eq!(p2.theta_b["a0"], vec![7.0, 4.0]);
        let p3 = axes.params_at(3);
        assert_eq!(p3.theta_r, vec![1.0, 5.0]);
        assert_eq!(p3.theta_b["a0"], vec![7.0, 2.0]);
    }

    #[test]
    fn empty_dataset_posterior_is_the_prior() {
        let spec = line_world(2);
        let data = Dataset::empty(spec);
        let axes = GridAxes {
            theta_r: vec![vec![0.0, 1.0], vec![-1.0, 1.0]],
            theta_b: BTreeMap::new(),
        };
        let post = grid_posterior(&data, &axes, &Prior::UniformGrid).unwrap();
        assert_eq!(post.len(), 4);
        for &lp in post.log_posterior() {
            assert_relative_eq!(lp.exp(), 0.25, max_relative = 1e-12);
        }
        assert_eq!(post.map_index(), 0);
        let total: f64 = post.log_posterior().iter().map(|&lp| lp.exp()).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn agentless_dataset_with_agent_axes_still_yields_the_prior() {
        let spec = line_world(2);
        let data = Dataset::empty(spec);
        let axes = single_agent_axes(
            vec![vec![0.0], vec![-1.0, 1.0]],
            "a0",
            vec![vec![0.0, 1.0, 2.0], vec![0.0]],
        );
        let post = grid_posterior(&data, &axes, &Prior::UniformGrid).unwrap();
        assert_eq!(post.len(), 6);
        for &lp in post.log_posterior() {
            assert_relative_eq!(lp.exp(), 1.0 / 6.0, max_relative = 1e-12);
        }
        assert_eq!(post.map_index(), 0);
    }

    #[test]
    fn posterior_mass_normalizes_and_marginalizes() {
        let spec = line_world(2);
        let go = Trajectory::new(vec![State::new(0, 0), State::new(1, 0), State::new(1, 0)]);
        let data = Dataset::single_agent(spec, "a0", vec![go.clone(), go]).unwrap();
        let axes = single_agent_axes(
            vec![vec![0.0], vec![-1.0, 0.0, 1.0]],
            "a0",
            vec![vec![0.0, 1.0, 2.0], vec![0.0]],
        );
        let post = grid_posterior(&data, &axes, &Prior::Gaussian { sigma: 10.0 }).unwrap();
        let total: f64 = post.log_posterior().iter().map(|&lp| lp.exp()).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
        for marginal in post.marginals() {
            assert_relative_eq!(marginal.iter().sum::<f64>(), 1.0, max_relative = 1e-9);
        }
        // The goal-seeking trajectory favors negative goal-distance cost
        // with positive rationality over the uniform alternative.
        let map = post.map_params();
        assert_eq!(map.theta_r, vec![0.0, -1.0]);
        assert!(map.theta_b["a0"][0] > 0.0);
    }

    #[test]
    fn gauge_twins_get_exactly_equal_mass() {
        let spec = line_world(2);
        let go = Trajectory::new(vec![State::new(0, 0), State::new(1, 0), State::new(1, 0)]);
        let data = Dataset::single_agent(spec, "a0", vec![go]).unwrap();
        // Grid containing (theta_r=[0,1], theta_b=[1,0]) and its gauge
        // twin (theta_r=[0,0.5], theta_b=[2,0]); the halving/doubling is
        // exact in binary floating point.
        let axes = single_agent_axes(
            vec![vec![0.0], vec![1.0, 0.5]],
            "a0",
            vec![vec![1.0, 2.0], vec![0.0]],
        );
        let post = grid_posterior(&data, &axes, &Prior::UniformGrid).unwrap();
        // Flat order: ([0,1],[1,0]), ([0,1],[2,0]), ([0,0.5],[1,0]), ([0,0.5],[2,0]).
        let lp = post.log_posterior();
        assert_eq!(lp[0], lp[3]);
        assert_ne!(lp[0], lp[1]);
    }

    #[test]
    fn budget_and_empty_grid_are_rejected() {
        let spec = line_world(1);
        let data = Dataset::empty(spec);
        let axes = GridAxes {
            theta_r: vec![vec![0.0; 10], vec![0.0; 10]],
            theta_b: BTreeMap::new(),
        };
        assert!(matches!(
            grid_posterior_budgeted(&data, &axes, &Prior::UniformGrid, 50),
            Err(Error::BudgetExceeded {
                requested: 100,
                budget: 50
            })
        ));
        let axes = GridAxes {
            theta_r: vec![vec![], vec![0.0]],
            theta_b: BTreeMap::new(),
        };
        assert!(matches!(
            grid_posterior(&data, &axes, &Prior::UniformGrid),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn goal_posterior_with_no_evidence_is_the_prior() {
        let base =
            GridSpec::new(3, 3, &[], (1, 1), &[(0, 1)], 4, FeatureMap::BiasGoalDist).unwrap();
        let candidates = vec![base.clone(), base.with_goals(&[(2, 1)]).unwrap()];
        let prior = [0.7, 0.3];
        let post = goal_posterior(
            &candidates,
            &prior,
            &[0.0, -1.0],
            &[1.0, 2.0],
            &[State::new(1, 1)],
        )
        .unwrap();
        assert_relative_eq!(post[0], 0.7, max_relative = 1e-12);
        assert_relative_eq!(post[1], 0.3, max_relative = 1e-12);
    }

    #[test]
    fn mirror_symmetric_goals_split_evenly() {
        // Goals at (0,1) and (2,1) are mirror images about the start
        // column; a prefix moving straight up carries no information
        // about the side.
        let base =
            GridSpec::new(3, 3, &[], (1, 0), &[(0, 1)], 4, FeatureMap::BiasGoalDist).unwrap();
        let candidates = vec![base.clone(), base.with_goals(&[(2, 1)]).unwrap()];
        let prefix = [State::new(1, 0), State::new(1, 1), State::new(1, 2)];
        let post =
            goal_posterior(&candidates, &[0.5, 0.5], &[0.0, -1.0], &[1.0, 3.0], &prefix).unwrap();
        assert_relative_eq!(post[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(post[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn informative_prefix_moves_the_posterior() {
        let base =
            GridSpec::new(3, 1, &[], (1, 0), &[(0, 0)], 3, FeatureMap::BiasGoalDist).unwrap();
        let candidates = vec![base.clone(), base.with_goals(&[(2, 0)]).unwrap()];
        // Walking left is evidence for the left goal under a goal-seeking
        // template.
        let prefix = [State::new(1, 0), State::new(0, 0)];
        let post =
            goal_posterior(&candidates, &[0.5, 0.5], &[0.0, -1.0], &[1.0, 3.0], &prefix).unwrap();
        assert!(post[0] > 0.8, "left-goal mass {} not dominant", post[0]);
        assert_relative_eq!(post[0] + post[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn goal_candidate_validation_fires() {
        let base =
            GridSpec::new(3, 3, &[], (1, 1), &[(0, 1)], 4, FeatureMap::BiasGoalDist).unwrap();
        let prefix = [State::new(1, 1)];
        // Empty set.
        assert!(matches!(
            goal_posterior(&[], &[], &[0.0, -1.0], &[1.0, 0.0], &prefix),
            Err(Error::InvalidCandidates(_))
        ));
        // Prior length mismatch.
        assert!(goal_posterior(
            core::slice::from_ref(&base),
            &[0.5, 0.5],
            &[0.0, -1.0],
            &[1.0, 0.0],
            &prefix
        )
        .is_err());
        // Massless prior.
        assert!(goal_posterior(
            core::slice::from_ref(&base),
            &[0.0],
            &[0.0, -1.0],
            &[1.0, 0.0],
            &prefix
        )
        .is_err());
        // Mismatched layout.
        let other = GridSpec::new(
            3,
            3,
            &[(2, 2)],
            (1, 1),
            &[(0, 1)],
            4,
            FeatureMap::BiasGoalDist,
        )
        .unwrap();
        assert!(matches!(
            goal_posterior(
                &[base, other],
                &[0.5, 0.5],
                &[0.0, -1.0],
                &[1.0, 0.0],
                &prefix
            ),
            Err(Error::InvalidCandidates(_))
        ));
    }
}
