//! Randomized cross-check of the dynamic-programming forward model
//! against brute-force enumeration on small boards: the recursion's log
//! partition value must match the enumerated one, and the enumerated
//! probabilities must sum to one.

use bsdr_core::grid::{enumerate_trajectories_capped, FeatureMap, GridSpec};
use bsdr_core::math::log_sum_exp;
use bsdr_core::model::{log_partition, traj_log_prob, traj_score, BsdrParams};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::config::OracleCheckSection;
use crate::Result;

const TOLERANCE: f64 = 1e-9;

/// What a check run saw: boards checked and any mismatches found.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Draw a random small board; the feature map cycles with `case`.
pub fn random_board(
    rng: &mut StdRng,
    max_side: usize,
    max_horizon: usize,
    case: usize,
) -> GridSpec {
    loop {
        let width = rng.random_range(1..=max_side.max(1));
        let height = rng.random_range(1..=max_side.max(1));
        let horizon = rng.random_range(1..=max_horizon.max(1));
        let feature_map = match case % 3 {
            0 => FeatureMap::BiasGoalDist,
            1 => FeatureMap::OneHot,
            _ => FeatureMap::GoalIndicators,
        };
        let mut free: Vec<(i32, i32)> = Vec::new();
        let mut obstacles: Vec<(i32, i32)> = Vec::new();
        for y in 0..height as i32 {
            for x in 0..width as i32 {
                if free.len() > 1 && rng.random_range(0.0..1.0) < 0.15 {
                    obstacles.push((x, y));
                } else {
                    free.push((x, y));
                }
            }
        }
        let start = free[rng.random_range(0..free.len())];
        let n_goals = rng.random_range(1..=2.min(free.len()));
        let mut goals: Vec<(i32, i32)> = Vec::new();
        while goals.len() < n_goals {
            let g = free[rng.random_range(0..free.len())];
            if !goals.contains(&g) {
                goals.push(g);
            }
        }
        if let Ok(spec) = GridSpec::new(
            width,
            height,
            &obstacles,
            start,
            &goals,
            horizon,
            feature_map,
        ) {
            return spec;
        }
    }
}

/// Run the check suite; failures carry the case index and the mismatch.
pub fn run_oracle_check(settings: &OracleCheckSection, cap: u128) -> Result<OracleOutcome> {
    let mut rng = StdRng::seed_from_u64(settings.seed);
    let mut failures = Vec::new();
    for case in 0..settings.cases {
        let spec = random_board(&mut rng, settings.max_side, settings.max_horizon, case);
        let dim = spec.feature_dim();
        let theta_r: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let theta_b: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let params = BsdrParams::new(theta_r, theta_b);

        let backup = log_partition(&spec, &params)?;
        let trajectories = enumerate_trajectories_capped(&spec, cap)?;
        let scores: Vec<f64> = trajectories
            .iter()
            .map(|traj| traj_score(&spec, &params, traj))
            .collect::<bsdr_core::Result<_>>()?;
        let brute = log_sum_exp(&scores);
        let gap = (backup.log_partition() - brute).abs();
        // A NaN gap must count as disagreement, so test the passing side.
        let agrees = gap < TOLERANCE;
        if !agrees {
            failures.push(format!(
                "case {case}: recursion log-partition {} vs enumeration {} (gap {gap:.3e})",
                backup.log_partition(),
                brute
            ));
            continue;
        }

        let mut total = 0.0;
        for traj in &trajectories {
            total += traj_log_prob(&spec, &params, &backup, traj)?.exp();
        }
        let normalized = (total - 1.0).abs() < TOLERANCE;
        if !normalized {
            failures.push(format!(
                "case {case}: enumerated probabilities sum to {total}, not 1"
            ));
        }
    }
    Ok(OracleOutcome {
        cases: settings.cases,
        failures,
    })
}
