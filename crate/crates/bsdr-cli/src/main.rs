//! Command-line driver: simulation, posterior evaluation, point
//! estimation, goal inference, packaged experiments, and a randomized
//! self-check. Results go to files under `--out`; logs go to stderr;
//! identical configuration and seed give byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bsdr_cli::config::{Config, OracleCheckSection};
use bsdr_cli::dataset_io::{load_dataset, save_dataset};
use bsdr_cli::experiments::{
    prefix_for_fraction, run_action_prediction, run_generalization, run_goal_inference,
    run_parameter_recovery, sample_population,
};
use bsdr_cli::oracle::run_oracle_check;
use bsdr_cli::report::{fmt_f64, write_bytes};
use bsdr_cli::{CliError, Result};
use bsdr_core::grid::DEFAULT_ENUMERATION_CAP;
use bsdr_core::inference::{
    goal_posterior, heuristic_fit, log_unnorm_posterior, mle_fit, posterior_from_log_values,
    Dataset, GridAxes, JointParams, DEFAULT_GRID_BUDGET,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "bsdr",
    version,
    about = "Trajectory model for agents whose rationality varies across states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic trajectories into `dataset.jsonl`.
    Simulate(SimulateArgs),
    /// Evaluate the exact posterior on a parameter grid.
    Posterior(PosteriorArgs),
    /// Fit parameters by penalized maximum likelihood.
    Fit(FitArgs),
    /// Fit unit rationality directions with the partition-free heuristic.
    FitHeuristic(FitArgs),
    /// Infer goals from trajectory prefixes of a dataset.
    GoalInfer(FitArgs),
    /// Run a packaged experiment and write its report.
    Experiment(ExperimentArgs),
    /// Cross-check the forward model against brute-force enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Random seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PosteriorArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Dataset path override.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for the grid sweep (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Dataset path override.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Which experiment: recovery, goal-inference, generalization, or
    /// prediction.
    name: String,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Base random seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    /// Optional TOML configuration file (defaults cover the check).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on enumerated action sequences per board.
    #[arg(long)]
    oracle_cap: Option<u128>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Posterior(args) => cmd_posterior(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::FitHeuristic(args) => cmd_fit_heuristic(&args),
        Command::GoalInfer(args) => cmd_goal_infer(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::OracleCheck(args) => cmd_oracle_check(&args),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

fn resolve_data(
    flag: &Option<PathBuf>,
    section: &Option<String>,
    section_name: &str,
) -> Result<PathBuf> {
    match (flag, section) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(PathBuf::from(p)),
        (None, None) => Err(CliError::Invalid(format!(
            "no dataset given: pass --data or set `data` in [{section_name}]"
        ))),
    }
}

fn emit_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn write_json_value(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn params_json(params: &JointParams) -> serde_json::Value {
    serde_json::json!({
        "theta_r": params.theta_r,
        "theta_b": params.theta_b,
    })
}

fn load_for(
    config: &Config,
    flag: &Option<PathBuf>,
    section_data: &Option<String>,
    section_name: &str,
) -> Result<(bsdr_core::grid::GridSpec, Dataset)> {
    let spec = config.grid_spec()?;
    let path = resolve_data(flag, section_data, section_name)?;
    let (data, warnings) = load_dataset(&path, &spec)?;
    emit_warnings(&warnings);
    eprintln!(
        "loaded {} trajectories for {} agents from {}",
        data.n_trajectories(),
        data.n_agents(),
        path.display()
    );
    Ok((spec, data))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = Config::load(&args.config)?;
    let spec = config.grid_spec()?;
    let section = config.simulate()?;
    let dim = spec.feature_dim();
    let check = |name: &str, v: &[f64]| -> Result<()> {
        if v.len() != dim {
            return Err(config.in_section(
                "simulate",
                CliError::Invalid(format!("{name} must have dimension {dim}")),
            ));
        }
        Ok(())
    };
    check("theta_r", &section.theta_r)?;
    if section.agents.is_empty() {
        return Err(config.in_section(
            "simulate",
            CliError::Invalid("at least one agent is needed".to_string()),
        ));
    }
    for (agent, tb) in &section.agents {
        check(&format!("agents.{agent}"), tb)?;
    }
    if section.trajectories_per_agent == 0 {
        return Err(config.in_section(
            "simulate",
            CliError::Invalid("trajectories_per_agent must be positive".to_string()),
        ));
    }
    let seed = args.seed.unwrap_or(section.seed);
    let data = sample_population(
        &spec,
        &section.theta_r,
        &section.agents,
        section.trajectories_per_agent,
        seed,
    )?;
    ensure_out(&args.out)?;
    let path = args.out.join("dataset.jsonl");
    save_dataset(&path, &data)?;
    eprintln!(
        "wrote {} trajectories for {} agents to {}",
        data.n_trajectories(),
        data.n_agents(),
        path.display()
    );
    Ok(())
}

/// Axis labels and value lists in flat order (shared cost axes first,
/// then each agent's axes in sorted agent order).
fn flat_axes(axes: &GridAxes) -> Vec<(String, Vec<f64>)> {
    let labels = axes.axis_labels();
    let mut values: Vec<Vec<f64>> = axes.theta_r.clone();
    for agent_axes in axes.theta_b.values() {
        values.extend(agent_axes.iter().cloned());
    }
    labels.into_iter().zip(values).collect()
}

fn cmd_posterior(args: &PosteriorArgs) -> Result<()> {
    let started = Instant::now();
    let config = Config::load(&args.config)?;
    let section = config.posterior()?;
    let (_, data) = load_for(&config, &args.data, &section.data, "posterior")?;
    let axes = section.axes();
    let prior = section
        .prior()
        .map_err(|e| config.in_section("posterior", e))?;
    axes.validate_for(&data)?;
    let n = axes.n_points();
    if n == 0 {
        return Err(bsdr_core::Error::EmptyGrid.into());
    }
    let budget = section
        .budget
        .map(u128::from)
        .unwrap_or(DEFAULT_GRID_BUDGET);
    if n > budget {
        return Err(bsdr_core::Error::BudgetExceeded {
            requested: n,
            budget,
        }
        .into());
    }
    let n = n as usize;
    let sweep = || -> bsdr_core::Result<Vec<f64>> {
        (0..n)
            .into_par_iter()
            .map(|flat| log_unnorm_posterior(&data, &axes.params_at(flat), &prior))
            .collect()
    };
    let log_values = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Invalid(format!("cannot build a {jobs}-thread pool: {e}")))?
            .install(sweep),
        None => sweep(),
    }?;
    let posterior = posterior_from_log_values(axes, log_values)?;

    ensure_out(&args.out)?;
    let axes = flat_axes(posterior.axes());
    let marginals = posterior.marginals();
    let map_index = posterior.map_index();
    let map_params = posterior.params_at(map_index);
    let marginal_docs: Vec<serde_json::Value> = axes
        .iter()
        .zip(&marginals)
        .map(|((label, values), probability)| {
            serde_json::json!({
                "axis": label,
                "values": values,
                "probability": probability,
            })
        })
        .collect();
    let json_path = args.out.join("posterior.json");
    write_json_value(
        &json_path,
        &serde_json::json!({
            "config_fingerprint": config.fingerprint,
            "n_points": posterior.len(),
            "log_normalizer": posterior.log_normalizer(),
            "map": {
                "flat_index": map_index,
                "theta_r": map_params.theta_r,
                "theta_b": map_params.theta_b,
            },
            "marginals": marginal_docs,
        }),
    )?;

    let mut csv = csv::WriterBuilder::new().from_writer(Vec::new());
    csv.write_record(["axis", "value", "probability"])
        .expect("csv header");
    for ((label, values), probability) in axes.iter().zip(&marginals) {
        for (v, p) in values.iter().zip(probability) {
            csv.write_record([label.clone(), fmt_f64(*v), fmt_f64(*p)])
                .expect("csv row");
        }
    }
    write_bytes(
        &args.out.join("marginals.csv"),
        &csv.into_inner().expect("csv flush"),
    )?;

    eprintln!(
        "evaluated {} grid points in {:.1}s → {}",
        n,
        started.elapsed().as_secs_f64(),
        json_path.display()
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let config = Config::load(&args.config)?;
    let section = config.fit()?;
    let (_, data) = load_for(&config, &args.data, &section.data, "fit")?;
    let prior = section.prior().map_err(|e| config.in_section("fit", e))?;
    let opt = section.opt_config();
    let fit = mle_fit(&data, &prior, &opt)?;
    ensure_out(&args.out)?;
    let path = args.out.join("fit.json");
    write_json_value(
        &path,
        &serde_json::json!({
            "params": params_json(&fit.params),
            "objective": fit.objective,
            "log_likelihood": fit.log_likelihood,
            "iterations": fit.diagnostics.iterations,
            "converged": fit.diagnostics.converged,
            "grad_norm": fit.diagnostics.grad_norm,
            "objective_trace": fit.diagnostics.objective_trace,
            "warnings": fit.diagnostics.warnings,
        }),
    )?;
    emit_warnings(&fit.diagnostics.warnings);
    eprintln!(
        "fit {} in {} iterations (objective {}) → {}",
        if fit.diagnostics.converged {
            "converged"
        } else {
            "stopped"
        },
        fit.diagnostics.iterations,
        fmt_f64(fit.objective),
        path.display()
    );
    Ok(())
}

fn cmd_fit_heuristic(args: &FitArgs) -> Result<()> {
    let config = Config::load(&args.config)?;
    let section = config.fit_heuristic()?;
    let (_, data) = load_for(&config, &args.data, &section.data, "fit_heuristic")?;
    let fit = heuristic_fit(&data, &section.heuristic_config())?;
    ensure_out(&args.out)?;
    let path = args.out.join("fit_heuristic.json");
    write_json_value(
        &path,
        &serde_json::json!({
            "params": params_json(&fit.params),
            "objective_trace": fit.objective_trace,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "residuals": fit.residuals,
            "multipliers": fit.multipliers,
        }),
    )?;
    eprintln!(
        "heuristic {} in {} iterations → {}",
        if fit.converged {
            "converged"
        } else {
            "stopped"
        },
        fit.iterations,
        path.display()
    );
    Ok(())
}

fn cmd_goal_infer(args: &FitArgs) -> Result<()> {
    let config = Config::load(&args.config)?;
    let section = config.goal_infer()?;
    let (spec, data) = load_for(&config, &args.data, &section.data, "goal_infer")?;
    let wrap = |e: CliError| config.in_section("goal_infer", e);
    let candidates = section.candidate_specs(&spec).map_err(wrap)?;
    let goal_prior = section.prior_weights().map_err(wrap)?;
    let fractions = section.validated_fractions().map_err(wrap)?;
    let dim = spec.feature_dim();
    if section.theta_r.len() != dim {
        return Err(wrap(CliError::Invalid(format!(
            "theta_r must have dimension {dim}"
        ))));
    }
    for (agent, _) in data.agents() {
        match section.theta_b.get(agent) {
            Some(tb) if tb.len() == dim => {}
            Some(_) => {
                return Err(wrap(CliError::Invalid(format!(
                    "theta_b.{agent} must have dimension {dim}"
                ))))
            }
            None => {
                return Err(wrap(CliError::Invalid(format!(
                    "dataset agent {agent:?} has no theta_b entry"
                ))))
            }
        }
    }
    if let Some(k) = section.true_goal_index {
        if k >= candidates.len() {
            return Err(wrap(CliError::Invalid(format!(
                "true_goal_index {k} outside 0..{}",
                candidates.len()
            ))));
        }
    }

    ensure_out(&args.out)?;
    let mut csv = csv::WriterBuilder::new().from_writer(Vec::new());
    csv.write_record([
        "agent",
        "trajectory",
        "fraction",
        "candidate",
        "probability",
    ])
    .expect("csv header");
    // fraction -> per-candidate posterior sums and count, for the summary.
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; candidates.len()]; fractions.len()];
    let mut count = 0usize;
    for (agent, agent_data) in data.agents() {
        let tb = &section.theta_b[agent];
        for (i, traj) in agent_data.trajectories().iter().enumerate() {
            for (fi, &fraction) in fractions.iter().enumerate() {
                let prefix = prefix_for_fraction(traj, fraction);
                let post = goal_posterior(&candidates, &goal_prior, &section.theta_r, tb, &prefix)?;
                for (ci, &p) in post.iter().enumerate() {
                    sums[fi][ci] += p;
                    csv.write_record([
                        agent.clone(),
                        i.to_string(),
                        fmt_f64(fraction),
                        ci.to_string(),
                        fmt_f64(p),
                    ])
                    .expect("csv row");
                }
            }
            count += 1;
        }
    }
    let csv_path = args.out.join("goal_infer.csv");
    write_bytes(&csv_path, &csv.into_inner().expect("csv flush"))?;

    let mut mean_posterior = serde_json::Map::new();
    let mut mean_true = serde_json::Map::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        let means: Vec<f64> = sums[fi]
            .iter()
            .map(|s| {
                if count == 0 {
                    f64::NAN
                } else {
                    s / count as f64
                }
            })
            .collect();
        if let Some(k) = section.true_goal_index {
            mean_true.insert(fmt_f64(fraction), serde_json::json!(means[k]));
        }
        mean_posterior.insert(fmt_f64(fraction), serde_json::json!(means));
    }
    let mut doc = serde_json::json!({
        "config_fingerprint": config.fingerprint,
        "candidates": section.candidates,
        "fractions": fractions,
        "trajectories": count,
        "mean_posterior_by_fraction": mean_posterior,
    });
    if section.true_goal_index.is_some() {
        doc["true_goal_index"] = serde_json::json!(section.true_goal_index);
        doc["mean_true_goal_prob_by_fraction"] = serde_json::Value::Object(mean_true);
    }
    let json_path = args.out.join("goal_infer.json");
    write_json_value(&json_path, &doc)?;
    eprintln!(
        "scored {} trajectories × {} fractions × {} candidates → {}",
        count,
        fractions.len(),
        candidates.len(),
        json_path.display()
    );
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let started = Instant::now();
    let config = Config::load(&args.config)?;
    let spec = config.grid_spec()?;
    let section = config.experiment()?;
    let base_seed = args.seed.unwrap_or(0);
    let missing = |name: &str| {
        config.in_section(
            &format!("experiment.{name}"),
            CliError::Invalid("section is missing".to_string()),
        )
    };
    let report = match args.name.replace('-', "_").as_str() {
        "recovery" => {
            let cfg = section.recovery.as_ref().ok_or_else(|| missing("recovery"))?;
            run_parameter_recovery(&spec, cfg, base_seed, &config.fingerprint)?
        }
        "goal_inference" => {
            let cfg = section
                .goal_inference
                .as_ref()
                .ok_or_else(|| missing("goal_inference"))?;
            run_goal_inference(&spec, cfg, base_seed, &config.fingerprint)?
        }
        "generalization" => {
            let cfg = section
                .generalization
                .as_ref()
                .ok_or_else(|| missing("generalization"))?;
            run_generalization(&spec, cfg, base_seed, &config.fingerprint)?
        }
        "prediction" => {
            let cfg = section
                .prediction
                .as_ref()
                .ok_or_else(|| missing("prediction"))?;
            run_action_prediction(&spec, cfg, base_seed, &config.fingerprint)?
        }
        other => {
            return Err(CliError::Invalid(format!(
                "unknown experiment {other:?} (expected recovery, goal-inference, generalization, or prediction)"
            )))
        }
    };
    ensure_out(&args.out)?;
    let json_path = args.out.join(format!("report_{}.json", report.experiment));
    let csv_path = args.out.join(format!("report_{}.csv", report.experiment));
    report.write_json(&json_path)?;
    report.write_csv(&csv_path)?;
    eprintln!(
        "{}: {} rows in {:.1}s → {}",
        report.experiment,
        report.rows.len(),
        started.elapsed().as_secs_f64(),
        json_path.display()
    );
    Ok(())
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<()> {
    let mut settings = match &args.config {
        Some(path) => Config::load(path)?.oracle_check(),
        None => OracleCheckSection::default(),
    };
    if let Some(seed) = args.seed {
        settings.seed = seed;
    }
    let cap = args.oracle_cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let outcome = run_oracle_check(&settings, cap)?;
    for failure in &outcome.failures {
        eprintln!("mismatch: {failure}");
    }
    if outcome.passed() {
        eprintln!(
            "checked {} boards up to {}x{} with horizon {}: recursion and enumeration agree",
            outcome.cases, settings.max_side, settings.max_side, settings.max_horizon
        );
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "{} of {} boards mismatched",
            outcome.failures.len(),
            outcome.cases
        )))
    }
}
