//! The trajectory model: per-state costs and rationalities, feature-count
//! matrices, exact log-partition by backward recursion, trajectory
//! log-probabilities, exact ancestral sampling, expected feature counts,
//! the constant-rationality reduction, and finite-horizon optimal policies.
//!
//! A trajectory `ξ = (s_0, ..., s_T)` is one of the `5^T` action sequences
//! of the board's horizon and is scored by
//! `score(ξ) = −Σ_t β(s_t)·c(s_t)` with `c(s) = θ_Rᵀφ(s)` and
//! `β(s) = θ_βᵀφ(s)`; the model is `P(ξ) = exp(score(ξ)) / Z`. Aliased
//! moves keep their own identity, so distinct action sequences through the
//! same states each carry the probability separately.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};

use crate::grid::{Action, Fnv, GridSpec, State, Trajectory};
use crate::math;
use crate::{Error, Result};

/// Reward weights and rationality weights for a single agent, both in the
/// board's feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BsdrParams {
    pub theta_r: Vec<f64>,
    pub theta_b: Vec<f64>,
}

impl BsdrParams {
    pub fn new(theta_r: Vec<f64>, theta_b: Vec<f64>) -> Self {
        BsdrParams { theta_r, theta_b }
    }

    /// Check dimensions against a board and that every entry is finite.
    pub fn validate_for(&self, spec: &GridSpec) -> Result<()> {
        check_vector(spec, &self.theta_r)?;
        check_vector(spec, &self.theta_b)
    }
}

fn check_vector(spec: &GridSpec, v: &[f64]) -> Result<()> {
    if v.len() != spec.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim(),
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

/// Symmetric `D×D` matrix of summed feature outer products,
/// `Φ = Σ_s φ(s)φ(s)ᵀ` (over one trajectory or a whole corpus).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCounts {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureCounts {
    pub fn zeros(dim: usize) -> Self {
        FeatureCounts {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Add `w · φφᵀ`, filling both triangles so symmetry is exact.
    pub fn add_outer(&mut self, phi: &[f64], w: f64) {
        assert_eq!(phi.len(), self.dim, "feature length must match matrix dim");
        for (row, pi) in self.data.chunks_exact_mut(self.dim).zip(phi) {
            let wi = w * pi;
            for (x, pj) in row.iter_mut().zip(phi) {
                *x += wi * pj;
            }
        }
    }

    /// Add `w` times another matrix.
    pub fn scaled_add(&mut self, other: &FeatureCounts, w: f64) {
        assert_eq!(other.dim, self.dim, "matrix dims must match");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += w * b;
        }
    }

    /// `aᵀ Φ b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dim, "left vector length must match dim");
        assert_eq!(b.len(), self.dim, "right vector length must match dim");
        self.data
            .chunks_exact(self.dim)
            .zip(a)
            .map(|(row, ai)| ai * math::dot(row, b))
            .sum()
    }

    /// `Φ v`.
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length must match dim");
        self.data
            .chunks_exact(self.dim)
            .map(|row| math::dot(row, v))
            .collect()
    }
}

/// `c(s) = θ_Rᵀφ(s)`.
pub fn state_cost(spec: &GridSpec, theta_r: &[f64], s: State) -> Result<f64> {
    check_vector(spec, theta_r)?;
    Ok(math::dot(theta_r, spec.phi(s)?))
}

/// `β(s) = θ_βᵀφ(s)`.
pub fn beta_of_state(spec: &GridSpec, theta_b: &[f64], s: State) -> Result<f64> {
    check_vector(spec, theta_b)?;
    Ok(math::dot(theta_b, spec.phi(s)?))
}

/// `Φ_ξ = Σ_{s∈ξ} φ(s)φ(s)ᵀ` over all `T+1` states, the start included.
pub fn feature_counts(spec: &GridSpec, traj: &Trajectory) -> Result<FeatureCounts> {
    spec.validate_trajectory(traj)?;
    let mut phi = FeatureCounts::zeros(spec.feature_dim());
    for &s in &traj.states {
        phi.add_outer(spec.phi_cell(spec.cell_index(s)), 1.0);
    }
    Ok(phi)
}

/// The log-score `−Σ_{s∈ξ} β(s)·c(s)` (the exponent of the unnormalized
/// trajectory weight), computed state by state.
pub fn traj_score(spec: &GridSpec, params: &BsdrParams, traj: &Trajectory) -> Result<f64> {
    params.validate_for(spec)?;
    spec.validate_trajectory(traj)?;
    Ok(score_states(spec, params, &traj.states))
}

/// Per-state weight `w(s) = −β(s)·c(s)` by cell index; callers guarantee
/// validity.
#[inline]
fn weight_cell(spec: &GridSpec, params: &BsdrParams, cell: usize) -> f64 {
    let phi = spec.phi_cell(cell);
    -math::dot(&params.theta_b, phi) * math::dot(&params.theta_r, phi)
}

fn score_states(spec: &GridSpec, params: &BsdrParams, states: &[State]) -> f64 {
    states
        .iter()
        .map(|&s| weight_cell(spec, params, spec.cell_index(s)))
        .sum()
}

/// Backward log-sum-exp recursion over suffix continuations.
///
/// `log_suffix[t][s]` is the log of the summed exponentiated scores of all
/// state suffixes `(s_t = s, ..., s_T)` reachable from `s`, including
/// `s`'s own weight; `log_suffix[T][s] = −β(s)c(s)` and `log_z =
/// log_suffix[0][start]`. The table is tied to the `(board, params)` pair
/// that built it by a fingerprint, checked by every consumer.
#[derive(Debug, Clone)]
pub struct SoftBackup {
    horizon: usize,
    n_cells: usize,
    log_suffix: Vec<f64>,
    log_z: f64,
    fingerprint: u64,
}

fn backup_fingerprint(spec: &GridSpec, params: &BsdrParams) -> u64 {
    let mut h = Fnv::new();
    h.write_u64(spec.fingerprint());
    for &x in &params.theta_r {
        h.write_u64(x.to_bits());
    }
    for &x in &params.theta_b {
        h.write_u64(x.to_bits());
    }
    h.finish()
}

impl SoftBackup {
    /// Run the backward recursion for a `(board, params)` pair.
    pub fn compute(spec: &GridSpec, params: &BsdrParams) -> Result<SoftBackup> {
        params.validate_for(spec)?;
        let t_max = spec.horizon();
        let n = spec.n_cells();
        let mut log_suffix = vec![f64::NEG_INFINITY; (t_max + 1) * n];

        let mut weights = vec![0.0; n];
        for &s in spec.valid_states() {
            let c = spec.cell_index(s);
            weights[c] = weight_cell(spec, params, c);
            log_suffix[t_max * n + c] = weights[c];
        }

        for t in (0..t_max).rev() {
            for &s in spec.valid_states() {
                let c = spec.cell_index(s);
                let mut terms = [f64::NEG_INFINITY; Action::COUNT];
                for a in Action::ALL {
                    terms[a.index()] = log_suffix[(t + 1) * n + spec.succ_cell(c, a)];
                }
                log_suffix[t * n + c] = weights[c] + math::log_sum_exp(&terms);
            }
        }

        let log_z = log_suffix[spec.cell_index(spec.start())];
        if !log_z.is_finite() {
            return Err(Error::Diverged(format!(
                "log partition is {log_z}; parameter magnitudes overflow the recursion"
            )));
        }
        Ok(SoftBackup {
            horizon: t_max,
            n_cells: n,
            log_suffix,
            log_z,
            fingerprint: backup_fingerprint(spec, params),
        })
    }

    /// The full log-partition `log Z`.
    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Whether this table was computed for exactly this `(board, params)`.
    pub fn is_current(&self, spec: &GridSpec, params: &BsdrParams) -> bool {
        self.fingerprint == backup_fingerprint(spec, params)
    }

    pub(crate) fn ensure_current(&self, spec: &GridSpec, params: &BsdrParams) -> Result<()> {
        if self.is_current(spec, params) {
            Ok(())
        } else {
            Err(Error::StaleBackup)
        }
    }

    #[inline]
    pub(crate) fn at(&self, t: usize, cell: usize) -> f64 {
        self.log_suffix[t * self.n_cells + cell]
    }
}

/// Convenience constructor mirroring [`SoftBackup::compute`].
pub fn log_partition(spec: &GridSpec, params: &BsdrParams) -> Result<SoftBackup> {
    SoftBackup::compute(spec, params)
}

/// `log P(ξ) = score(ξ) − log Z` for one action sequence.
pub fn traj_log_prob(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
    traj: &Trajectory,
) -> Result<f64> {
    backup.ensure_current(spec, params)?;
    Ok(traj_score(spec, params, traj)? - backup.log_z)
}

/// Log of the number of action sequences that realize a given state
/// sequence (product of per-step transition multiplicities).
pub fn log_multiplicity(spec: &GridSpec, states: &[State]) -> Result<f64> {
    spec.validate_prefix(states)?;
    let mut acc = 0.0;
    for t in 0..states.len() - 1 {
        let m = spec.transition_multiplicity(states[t], states[t + 1])?;
        acc += math::ln(m as f64);
    }
    Ok(acc)
}

/// Log-probability of observing a full state sequence, summing over the
/// aliased action sequences that realize it.
pub fn state_seq_log_prob(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
    states: &[State],
) -> Result<f64> {
    backup.ensure_current(spec, params)?;
    if states.len() != spec.horizon() + 1 {
        return Err(Error::InvalidTrajectory {
            step: 0,
            reason: format!(
                "expected {} states for horizon {}, got {}",
                spec.horizon() + 1,
                spec.horizon(),
                states.len()
            ),
        });
    }
    params.validate_for(spec)?;
    Ok(log_multiplicity(spec, states)? + score_states(spec, params, states) - backup.log_z)
}

/// Conditional log-probabilities of the five actions at `(t, s)`,
/// `log P(a | s_t = s) = log_suffix[t+1][succ(s,a)] − logΣ_a' (·)`, in
/// action order.
pub fn step_action_log_probs(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
    t: usize,
    s: State,
) -> Result<[f64; Action::COUNT]> {
    backup.ensure_current(spec, params)?;
    if t >= spec.horizon() {
        return Err(Error::InvalidTrajectory {
            step: t,
            reason: format!(
                "no action is taken at step {t} of horizon {}",
                spec.horizon()
            ),
        });
    }
    if !spec.is_valid(s) {
        return Err(Error::InvalidState { x: s.x, y: s.y });
    }
    let cell = spec.cell_index(s);
    let mut terms = [f64::NEG_INFINITY; Action::COUNT];
    for a in Action::ALL {
        terms[a.index()] = backup.at(t + 1, spec.succ_cell(cell, a));
    }
    let total = math::log_sum_exp(&terms);
    for v in &mut terms {
        *v -= total;
    }
    Ok(terms)
}

/// Draw one trajectory by ancestral sampling: at each step the action is
/// drawn with probability proportional to the successor's suffix weight,
/// which reproduces the trajectory distribution exactly.
pub fn sample_trajectory(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
    rng: &mut impl RngCore,
) -> Result<Trajectory> {
    backup.ensure_current(spec, params)?;
    let t_max = spec.horizon();
    let mut states = Vec::with_capacity(t_max + 1);
    let mut actions = Vec::with_capacity(t_max);
    let mut s = spec.start();
    states.push(s);
    for t in 0..t_max {
        let log_probs = step_action_log_probs(spec, params, backup, t, s)?;
        let u = math::uniform_f64(rng.next_u64());
        let mut cumulative = 0.0;
        let mut chosen = Action::Stay;
        for a in Action::ALL {
            cumulative += math::exp(log_probs[a.index()]);
            if u < cumulative {
                chosen = a;
                break;
            }
        }
        s = spec.successor(s, chosen)?;
        states.push(s);
        actions.push(chosen);
    }
    Ok(Trajectory::with_actions(states, actions))
}

/// [`sample_trajectory`] with a fixed seed.
pub fn sample_trajectory_seeded(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    sample_trajectory(spec, params, backup, &mut rng)
}

/// Model-expected feature counts `E[Φ_ξ]` together with the per-timestep
/// state occupancy table that produced them.
#[derive(Debug, Clone)]
pub struct ExpectedFeatures {
    pub phi: FeatureCounts,
    occupancy: Vec<f64>,
    n_cells: usize,
    horizon: usize,
}

impl ExpectedFeatures {
    /// Occupancy `μ[t][cell]` (row-major cell index); rows sum to 1.
    pub fn occupancy_at(&self, t: usize, cell: usize) -> f64 {
        assert!(t <= self.horizon, "time index out of range");
        assert!(cell < self.n_cells, "cell index out of range");
        self.occupancy[t * self.n_cells + cell]
    }
}

/// Forward pass under the conditional action distributions of the
/// sampler: propagates occupancy `μ[t][s]` from the start and accumulates
/// `E[Φ] = Σ_t Σ_s μ[t][s]·φ(s)φ(s)ᵀ`.
pub fn expected_features(
    spec: &GridSpec,
    params: &BsdrParams,
    backup: &SoftBackup,
) -> Result<ExpectedFeatures> {
    backup.ensure_current(spec, params)?;
    let t_max = spec.horizon();
    let n = spec.n_cells();
    let mut occupancy = vec![0.0; (t_max + 1) * n];
    occupancy[spec.cell_index(spec.start())] = 1.0;

    for t in 0..t_max {
        for &s in spec.valid_states() {
            let cell = spec.cell_index(s);
            let mass = occupancy[t * n + cell];
            if mass == 0.0 {
                continue;
            }
            let mut terms = [f64::NEG_INFINITY; Action::COUNT];
            for a in Action::ALL {
                terms[a.index()] = backup.at(t + 1, spec.succ_cell(cell, a));
            }
            let total = math::log_sum_exp(&terms);
            for a in Action::ALL {
                let p = math::exp(terms[a.index()] - total);
                occupancy[(t + 1) * n + spec.succ_cell(cell, a)] += mass * p;
            }
        }
    }

    let mut phi = FeatureCounts::zeros(spec.feature_dim());
    for t in 0..=t_max {
        for &s in spec.valid_states() {
            let cell = spec.cell_index(s);
            let mass = occupancy[t * n + cell];
            if mass != 0.0 {
                phi.add_outer(spec.phi_cell(cell), mass);
            }
        }
    }
    Ok(ExpectedFeatures {
        phi,
        occupancy,
        n_cells: n,
        horizon: t_max,
    })
}

/// Parameters of the constant-rationality reduction: rationality `β` on
/// the bias coordinate only, zero elsewhere. Requires a feature map whose
/// first coordinate is the constant 1 (checked over every free cell).
pub fn br_params(spec: &GridSpec, theta_r: &[f64], beta: f64) -> Result<BsdrParams> {
    check_vector(spec, theta_r)?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParams(format!(
            "constant rationality must be finite and nonnegative, got {beta}"
        )));
    }
    for &s in spec.valid_states() {
        if spec.phi_cell(spec.cell_index(s))[0] != 1.0 {
            return Err(Error::NoBiasFeature);
        }
    }
    let mut theta_b = vec![0.0; spec.feature_dim()];
    theta_b[0] = beta;
    Ok(BsdrParams::new(theta_r.to_vec(), theta_b))
}

/// Log-probability under the constant-rationality model
/// `P(ξ) ∝ exp(−β Σ_s c(s))`, implemented by delegation through
/// [`br_params`].
pub fn br_traj_log_prob(
    spec: &GridSpec,
    theta_r: &[f64],
    beta: f64,
    traj: &Trajectory,
) -> Result<f64> {
    let params = br_params(spec, theta_r, beta)?;
    let backup = SoftBackup::compute(spec, &params)?;
    traj_log_prob(spec, &params, &backup, traj)
}

/// Deterministic finite-horizon minimum-cost policy and its value table.
///
/// `values[t][s]` is the least achievable sum of `c(s_u)` over `u =
/// t..=T` starting from `s`; `actions[t][s]` attains it, ties broken by
/// the smallest action index.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    horizon: usize,
    n_cells: usize,
    actions: Vec<Action>,
    values: Vec<f64>,
    fingerprint: u64,
}

fn policy_fingerprint(spec: &GridSpec, theta_r: &[f64]) -> u64 {
    let mut h = Fnv::new();
    h.write_u64(spec.fingerprint());
    for &x in theta_r {
        h.write_u64(x.to_bits());
    }
    h.finish()
}

impl OptimalPolicy {
    /// Exact backward value iteration minimizing summed state cost.
    pub fn compute(spec: &GridSpec, theta_r: &[f64]) -> Result<OptimalPolicy> {
        check_vector(spec, theta_r)?;
        let t_max = spec.horizon();
        let n = spec.n_cells();
        let mut values = vec![f64::INFINITY; (t_max + 1) * n];
        let mut actions = vec![Action::Up; t_max * n];

        let mut costs = vec![0.0; n];
        for &s in spec.valid_states() {
            let c = spec.cell_index(s);
            costs[c] = math::dot(theta_r, spec.phi_cell(c));
            values[t_max * n + c] = costs[c];
        }

        for t in (0..t_max).rev() {
            for &s in spec.valid_states() {
                let c = spec.cell_index(s);
                let mut best = f64::INFINITY;
                let mut best_action = Action::Up;
                for a in Action::ALL {
                    let v = values[(t + 1) * n + spec.succ_cell(c, a)];
                    if v < best {
                        best = v;
                        best_action = a;
                    }
                }
                values[t * n + c] = costs[c] + best;
                actions[t * n + c] = best_action;
            }
        }

        Ok(OptimalPolicy {
            horizon: t_max,
            n_cells: n,
            actions,
            values,
            fingerprint: policy_fingerprint(spec, theta_r),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Whether this policy was computed for exactly this `(board, θ_R)`.
    pub fn is_current(&self, spec: &GridSpec, theta_r: &[f64]) -> bool {
        self.fingerprint == policy_fingerprint(spec, theta_r)
    }

    /// The action prescribed at `(t, s)`.
    pub fn action_at(&self, spec: &GridSpec, t: usize, s: State) -> Result<Action> {
        self.ensure_current_spec(spec)?;
        if t >= self.horizon {
            return Err(Error::InvalidTrajectory {
                step: t,
                reason: format!("no action is taken at step {t} of horizon {}", self.horizon),
            });
        }
        if !spec.is_valid(s) {
            return Err(Error::InvalidState { x: s.x, y: s.y });
        }
        Ok(self.actions[t * self.n_cells + spec.cell_index(s)])
    }

    /// Least achievable remaining cost from `(t, s)`.
    pub fn value_at(&self, spec: &GridSpec, t: usize, s: State) -> Result<f64> {
        self.ensure_current_spec(spec)?;
        if t > self.horizon {
            return Err(Error::InvalidTrajectory {
                step: t,
                reason: format!("time {t} exceeds horizon {}", self.horizon),
            });
        }
        if !spec.is_valid(s) {
            return Err(Error::InvalidState { x: s.x, y: s.y });
        }
        Ok(self.values[t * self.n_cells + spec.cell_index(s)])
    }

    fn ensure_current_spec(&self, spec: &GridSpec) -> Result<()> {
        // The fingerprint also covers theta_r, which accessors don't see;
        // rollout and friends validate against the board dimensions here
        // and trust the constructor for the rest.
        if spec.n_cells() == self.n_cells && spec.horizon() == self.horizon {
            Ok(())
        } else {
            Err(Error::StaleBackup)
        }
    }

    /// Follow the policy deterministically from the start cell.
    pub fn rollout(&self, spec: &GridSpec) -> Result<Trajectory> {
        self.ensure_current_spec(spec)?;
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut actions = Vec::with_capacity(self.horizon);
        let mut s = spec.start();
        states.push(s);
        for t in 0..self.horizon {
            let a = self.action_at(spec, t, s)?;
            s = spec.successor(s, a)?;
            states.push(s);
            actions.push(a);
        }
        Ok(Trajectory::with_actions(states, actions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{enumerate_trajectories, FeatureMap};
    use approx::assert_relative_eq;

    /// Two cells in a row; the right cell is the goal. With
    /// `theta_r = [0, −1]` and `theta_b = [1, 0]` the per-state weights
    /// are 0 at the left cell and 1 at the goal, so every quantity has a
    /// short closed form.
    fn two_cell_world() -> (GridSpec, BsdrParams) {
        let spec =
            GridSpec::new(2, 1, &[], (0, 0), &[(1, 0)], 1, FeatureMap::BiasGoalDist).unwrap();
        let params = BsdrParams::new(vec![0.0, -1.0], vec![1.0, 0.0]);
        (spec, params)
    }

    #[test]
    fn score_per_state_matches_bilinear_form() {
        let spec =
            GridSpec::new(3, 3, &[], (0, 0), &[(2, 2)], 4, FeatureMap::BiasGoalDist).unwrap();
        let params = BsdrParams::new(vec![0.7, -1.3], vec![0.4, 2.1]);
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        for traj in enumerate_trajectories(&spec).unwrap().iter().step_by(37) {
            let per_state = traj_score(&spec, &params, traj).unwrap();
            let phi = feature_counts(&spec, traj).unwrap();
            let bilinear = -phi.bilinear(&params.theta_b, &params.theta_r);
            assert_relative_eq!(per_state, bilinear, max_relative = 1e-12);
            // And the normalized form is consistent with the backup.
            let lp = traj_log_prob(&spec, &params, &backup, traj).unwrap();
            assert_relative_eq!(lp, per_state - backup.log_partition(), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_rationality_gives_uniform_distribution() {
        let spec = GridSpec::new(
            3,
            3,
            &[(1, 1)],
            (0, 0),
            &[(2, 2)],
            4,
            FeatureMap::BiasGoalDist,
        )
        .unwrap();
        let params = BsdrParams::new(vec![0.3, -0.9], vec![0.0, 0.0]);
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        let expected = 4.0 * 5f64.ln();
        assert_relative_eq!(backup.log_partition(), expected, max_relative = 1e-12);
        let traj = sample_trajectory_seeded(&spec, &params, &backup, 7).unwrap();
        assert_relative_eq!(
            traj_log_prob(&spec, &params, &backup, &traj).unwrap(),
            -expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_cell_world_closed_form() {
        // One cell: all 5^T sequences coincide and each state contributes
        // the same weight, so log Z = T·ln 5 + (T+1)·w and the lone state
        // sequence has probability exactly 1.
        let spec =
            GridSpec::new(1, 1, &[], (0, 0), &[(0, 0)], 3, FeatureMap::BiasGoalDist).unwrap();
        let params = BsdrParams::new(vec![0.5, 0.3], vec![1.0, 0.5]);
        // phi = [1, 1]: c = 0.8, beta = 1.5, w = -1.2.
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        assert_relative_eq!(
            backup.log_partition(),
            3.0 * 5f64.ln() + 4.0 * (-1.2),
            max_relative = 1e-12
        );
        let states = vec![State::new(0, 0); 4];
        let seq = state_seq_log_prob(&spec, &params, &backup, &states).unwrap();
        assert_relative_eq!(seq, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_cell_world_closed_forms() {
        let (spec, params) = two_cell_world();
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        // Four action sequences stay put (weight e^0), one reaches the
        // goal (weight e^1): Z = 4 + e.
        let z = 4.0 + core::f64::consts::E;
        assert_relative_eq!(backup.log_partition(), z.ln(), max_relative = 1e-12);

        let go = Trajectory::new(vec![State::new(0, 0), State::new(1, 0)]);
        assert_relative_eq!(
            traj_log_prob(&spec, &params, &backup, &go).unwrap(),
            1.0 - z.ln(),
            max_relative = 1e-12
        );

        // The staying state sequence aggregates its four aliased actions.
        let stay = [State::new(0, 0), State::new(0, 0)];
        assert_relative_eq!(
            state_seq_log_prob(&spec, &params, &backup, &stay).unwrap(),
            (4.0 / z).ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            log_multiplicity(&spec, &stay).unwrap(),
            4f64.ln(),
            max_relative = 1e-12
        );

        // Step conditionals: only `right` leads to the goal.
        let lp = step_action_log_probs(&spec, &params, &backup, 0, spec.start()).unwrap();
        assert_relative_eq!(
            lp[Action::Right.index()],
            1.0 - z.ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(lp[Action::Up.index()], -z.ln(), max_relative = 1e-12);
        let total: f64 = lp.iter().map(|&x| x.exp()).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn expected_features_two_cell_closed_form() {
        let (spec, params) = two_cell_world();
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        let ef = expected_features(&spec, &params, &backup).unwrap();
        let z = 4.0 + core::f64::consts::E;
        let p_go = core::f64::consts::E / z;
        assert_relative_eq!(ef.occupancy_at(0, 0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(ef.occupancy_at(1, 1), p_go, max_relative = 1e-12);
        assert_relative_eq!(ef.occupancy_at(1, 0), 1.0 - p_go, max_relative = 1e-12);
        // E[Φ] = Φ_stay + p_go · (Φ_go − Φ_stay) = [[2, p],[p, p]].
        assert_relative_eq!(ef.phi.get(0, 0), 2.0, max_relative = 1e-12);
        assert_relative_eq!(ef.phi.get(0, 1), p_go, max_relative = 1e-12);
        assert_relative_eq!(ef.phi.get(1, 0), p_go, max_relative = 1e-12);
        assert_relative_eq!(ef.phi.get(1, 1), p_go, max_relative = 1e-12);
    }

    #[test]
    fn occupancy_rows_sum_to_one() {
        let spec = GridSpec::new(
            4,
            3,
            &[(1, 1), (2, 1)],
            (0, 0),
            &[(3, 2)],
            6,
            FeatureMap::BiasGoalDist,
        )
        .unwrap();
        let params = BsdrParams::new(vec![0.2, -1.1], vec![0.8, 1.7]);
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        let ef = expected_features(&spec, &params, &backup).unwrap();
        for t in 0..=spec.horizon() {
            let total: f64 = (0..spec.n_cells()).map(|c| ef.occupancy_at(t, c)).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn uniform_step_spreads_by_multiplicity() {
        // From the corner of an open 2x2 board under zero rationality the
        // one-step occupancy is proportional to transition multiplicity:
        // 3/5 stay (down, left, stay), 1/5 up, 1/5 right.
        let spec =
            GridSpec::new(2, 2, &[], (0, 0), &[(1, 1)], 1, FeatureMap::BiasGoalDist).unwrap();
        let params = BsdrParams::new(vec![1.0, -2.0], vec![0.0, 0.0]);
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        let ef = expected_features(&spec, &params, &backup).unwrap();
        assert_relative_eq!(ef.occupancy_at(1, 0), 0.6, max_relative = 1e-12);
        assert_relative_eq!(ef.occupancy_at(1, 1), 0.2, max_relative = 1e-12);
        assert_relative_eq!(ef.occupancy_at(1, 2), 0.2, max_relative = 1e-12);
        assert_relative_eq!(ef.occupancy_at(1, 3), 0.0, epsilon = 0.0);
    }

    #[test]
    fn sampling_is_seed_deterministic_and_valid() {
        let spec =
            GridSpec::new(3, 3, &[], (1, 1), &[(2, 2)], 5, FeatureMap::BiasGoalDist).unwrap();
        let params = BsdrParams::new(vec![0.0, -2.0], vec![1.0, 3.0]);
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        let a = sample_trajectory_seeded(&spec, &params, &backup, 42).unwrap();
        let b = sample_trajectory_seeded(&spec, &params, &backup, 42).unwrap();
        assert_eq!(a, b);
        spec.validate_trajectory(&a).unwrap();
        let c = sample_trajectory_seeded(&spec, &params, &backup, 43).unwrap();
        spec.validate_trajectory(&c).unwrap();
    }

    #[test]
    fn stale_backup_is_rejected() {
        let (spec, params) = two_cell_world();
        let backup = SoftBackup::compute(&spec, &params).unwrap();
        let other = BsdrParams::new(vec![0.0, -1.0], vec![2.0, 0.0]);
        let traj = Trajectory::new(vec![State::new(0, 0), State::new(1, 0)]);
        assert!(matches!(
            traj_log_prob(&spec, &other, &backup, &traj),
            Err(Error::StaleBackup)
        ));
        let other_spec = spec.with_goals(&[(0, 0)]).unwrap();
        assert!(matches!(
            traj_log_prob(&other_spec, &params, &backup, &traj),
            Err(Error::StaleBackup)
        ));
    }

    #[test]
    fn br_reduction_requires_bias_feature() {
        let spec = GridSpec::new(2, 2, &[], (0, 0), &[(1, 1)], 2, FeatureMap::OneHot).unwrap();
        let theta_r = vec![0.0, 1.0, 1.0, -2.0];
        assert!(matches!(
            br_params(&spec, &theta_r, 1.0),
            Err(Error::NoBiasFeature)
        ));
        let spec =
            GridSpec::new(2, 2, &[], (0, 0), &[(1, 1)], 2, FeatureMap::GoalIndicators).unwrap();
        let p = br_params(&spec, &[0.0, -1.0], 2.5).unwrap();
        assert_eq!(p.theta_b, vec![2.5, 0.0]);
        assert!(matches!(
            br_params(&spec, &[0.0, -1.0], -0.5),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn br_zero_beta_is_uniform() {
        let spec =
            GridSpec::new(3, 3, &[], (0, 0), &[(2, 2)], 3, FeatureMap::BiasGoalDist).unwrap();
        let traj = Trajectory::new(vec![
            State::new(0, 0),
            State::new(1, 0),
            State::new(1, 1),
            State::new(1, 2),
        ]);
        let lp = br_traj_log_prob(&spec, &[0.0, -1.0], 0.0, &traj).unwrap();
        assert_relative_eq!(lp, -3.0 * 5f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn dimension_and_finiteness_checks_fire() {
        let (spec, _) = two_cell_world();
        let bad_dim = BsdrParams::new(vec![0.0], vec![1.0, 0.0]);
        assert!(matches!(
            SoftBackup::compute(&spec, &bad_dim),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        let bad_val = BsdrParams::new(vec![0.0, f64::NAN], vec![1.0, 0.0]);
        assert!(matches!(
            SoftBackup::compute(&spec, &bad_val),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn optimal_policy_total_tie_picks_first_action() {
        // Zero cost everywhere: every action ties, so the smallest index
        // (`up`) is chosen at every state and time.
        let spec =
            GridSpec::new(3, 3, &[], (1, 1), &[(2, 2)], 3, FeatureMap::BiasGoalDist).unwrap();
        let policy = OptimalPolicy::compute(&spec, &[0.0, 0.0]).unwrap();
        for t in 0..spec.horizon() {
            for &s in spec.valid_states() {
                assert_eq!(policy.action_at(&spec, t, s).unwrap(), Action::Up);
            }
        }
        let roll = policy.rollout(&spec).unwrap();
        assert_eq!(roll.states.last(), Some(&State::new(1, 2)));
    }

    #[test]
    fn optimal_policy_two_cell_world() {
        let (spec, _) = two_cell_world();
        // Costs: 0 at the left cell, −1 at the goal — move right.
        let policy = OptimalPolicy::compute(&spec, &[0.0, -1.0]).unwrap();
        assert_eq!(
            policy.action_at(&spec, 0, spec.start()).unwrap(),
            Action::Right
        );
        assert_relative_eq!(
            policy.value_at(&spec, 0, spec.start()).unwrap(),
            -1.0,
            max_relative = 1e-15
        );
        let roll = policy.rollout(&spec).unwrap();
        assert_eq!(roll.states, vec![State::new(0, 0), State::new(1, 0)]);
    }

    #[test]
    fn policy_cost_is_enumeration_minimum() {
        let spec = GridSpec::new(
            3,
            3,
            &[(1, 0), (1, 1)],
            (0, 0),
            &[(2, 0)],
            5,
            FeatureMap::BiasGoalDist,
        )
        .unwrap();
        let theta_r = vec![0.1, -1.0];
        let policy = OptimalPolicy::compute(&spec, &theta_r).unwrap();
        let best_enumerated = enumerate_trajectories(&spec)
            .unwrap()
            .iter()
            .map(|t| {
                t.states
                    .iter()
                    .map(|&s| state_cost(&spec, &theta_r, s).unwrap())
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(
            policy.value_at(&spec, 0, spec.start()).unwrap(),
            best_enumerated,
            max_relative = 1e-12
        );
    }
}
