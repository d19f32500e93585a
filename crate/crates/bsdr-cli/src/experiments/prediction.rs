//! Action prediction: fit the roster on a training split and score each
//! model's per-step conditional action probabilities on held-out
//! trajectories, with the generating parameters as a reference.

use std::collections::BTreeMap;

use bsdr_core::grid::GridSpec;
use bsdr_core::inference::{JointParams, OptConfig, Prior};
use bsdr_core::math::derive_seed;
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::report::{mean, MetricRow, Report};
use crate::{CliError, Result};

use super::roster::{
    chain_rule_gap, fit_br_aggregate, fit_br_per_agent, fit_bsdr, held_out_cross_entropy,
    uniform_model, FittedModel, RosterModel,
};
use super::{
    agent_ids, sample_population, sample_theta_b, split_train_test, validate_ranges,
    PredictionConfig,
};

fn validate(spec: &GridSpec, cfg: &PredictionConfig) -> Result<()> {
    let dim = spec.feature_dim();
    if cfg.theta_r.len() != dim {
        return Err(CliError::Invalid(format!(
            "theta_r must have dimension {dim}"
        )));
    }
    validate_ranges(&cfg.beta_ranges, dim)?;
    if cfg.n_agents == 0 || cfg.n_seeds == 0 {
        return Err(CliError::Invalid(
            "n_agents and n_seeds must be positive".to_string(),
        ));
    }
    if cfg.trajectories_per_agent < 4 {
        return Err(CliError::Invalid(
            "trajectories_per_agent must be at least 4 so every agent keeps a held-out trajectory"
                .to_string(),
        ));
    }
    Ok(())
}

/// Run the action-prediction experiment; one row per seed and model.
pub fn run_action_prediction(
    spec: &GridSpec,
    cfg: &PredictionConfig,
    base_seed: u64,
    fingerprint: &str,
) -> Result<Report> {
    validate(spec, cfg)?;
    let prior = Prior::Gaussian { sigma: 10.0 };
    let opt = OptConfig {
        max_iters: cfg.max_iters.unwrap_or(1500),
        tol: cfg.tol.unwrap_or(1e-5),
        ..OptConfig::default()
    };

    let mut report = Report::new("prediction", fingerprint, base_seed);
    let mut ce_acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut gap_acc: Vec<f64> = Vec::new();

    for s in 0..cfg.n_seeds {
        let seed = derive_seed(base_seed, s);
        let mut pop_rng = StdRng::seed_from_u64(derive_seed(seed, 0));
        let mut theta_b = BTreeMap::new();
        for id in agent_ids(cfg.n_agents) {
            theta_b.insert(id, sample_theta_b(&cfg.beta_ranges, &mut pop_rng));
        }
        let data = sample_population(
            spec,
            &cfg.theta_r,
            &theta_b,
            cfg.trajectories_per_agent,
            derive_seed(seed, 1),
        )?;
        let (train, test) = split_train_test(&data)?;

        let truth = FittedModel {
            model: RosterModel::Bsdr,
            params: Some(JointParams::new(cfg.theta_r.clone(), theta_b.clone())),
            objective: f64::NAN,
            converged: true,
            iterations: 0,
            warnings: Vec::new(),
        };
        // The summed per-step conditionals must telescope to the whole-
        // path log-probability; check it on one held-out trajectory.
        let (first_agent, first_data) = test
            .agents()
            .next()
            .ok_or_else(|| CliError::Invalid("the test split is empty".to_string()))?;
        let gap = chain_rule_gap(
            spec,
            &truth
                .params
                .as_ref()
                .expect("truth carries parameters")
                .agent_params(first_agent)
                .expect("truth covers every agent"),
            &first_data.trajectories()[0],
        )?;
        if gap > 1e-6 {
            return Err(CliError::Invalid(format!(
                "per-step conditionals do not telescope (gap {gap:.3e})"
            )));
        }
        gap_acc.push(gap);

        let entries = [
            ("truth", truth),
            ("bsdr", fit_bsdr(&train, &prior, &opt)?),
            ("br_aggregate", fit_br_aggregate(&train, &prior, &opt)?),
            ("br_per_agent", fit_br_per_agent(&train, &prior, &opt)?),
            ("uniform", uniform_model()),
        ];
        for (label, fitted) in &entries {
            let (ce, steps) = held_out_cross_entropy(spec, fitted, &test)?;
            ce_acc.entry((*label).to_string()).or_default().push(ce);
            report.rows.push(
                MetricRow::new(s, *label)
                    .with("mean_ce", ce)
                    .with("steps", steps as f64),
            );
        }
    }

    for (label, values) in &ce_acc {
        report
            .summary
            .insert(format!("mean_ce[{label}]"), mean(values));
    }
    report
        .summary
        .insert("mean_chain_rule_gap".to_string(), mean(&gap_acc));
    report.details.insert(
        "population".to_string(),
        serde_json::json!({
            "n_agents": cfg.n_agents,
            "trajectories_per_agent": cfg.trajectories_per_agent,
            "beta_ranges": cfg.beta_ranges,
            "theta_r": cfg.theta_r,
        }),
    );
    Ok(report)
}
