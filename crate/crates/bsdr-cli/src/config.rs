//! Run configuration: one TOML file drives every subcommand.
//!
//! Sections are optional; each subcommand demands the ones it needs and
//! errors otherwise, naming the config path and section. The raw file
//! bytes are hashed so reports can state exactly which configuration
//! produced them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use bsdr_core::grid::{FeatureMap, GridSpec};
use bsdr_core::inference::{GridAxes, HeuristicConfig, OptConfig, Prior};
use serde::{Deserialize, Serialize};

use crate::experiments::{
    GeneralizationConfig, GoalInferenceConfig, PredictionConfig, RecoveryConfig,
};
use crate::report::sha256_hex;
use crate::{CliError, Result};

/// Parsed configuration plus its provenance (path and content hash).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip)]
    pub path: String,
    #[serde(skip)]
    pub fingerprint: String,
    pub grid: Option<GridSection>,
    pub simulate: Option<SimulateSection>,
    pub posterior: Option<PosteriorSection>,
    pub fit: Option<FitSection>,
    pub fit_heuristic: Option<FitHeuristicSection>,
    pub goal_infer: Option<GoalInferSection>,
    pub experiment: Option<ExperimentSection>,
    pub oracle_check: Option<OracleCheckSection>,
}

impl Config {
    /// Read and parse a TOML config file, recording its SHA-256 hash.
    pub fn load(path: &Path) -> Result<Config> {
        let shown = path.display().to_string();
        let bytes = fs::read(path).map_err(|e| CliError::io(&shown, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Config {
            path: shown.clone(),
            message: format!("not valid UTF-8: {e}"),
        })?;
        let mut config: Config = toml::from_str(&text).map_err(|e| CliError::Config {
            path: shown.clone(),
            message: e.to_string().trim_end().replace('\n', " "),
        })?;
        config.path = shown;
        config.fingerprint = sha256_hex(&bytes);
        Ok(config)
    }

    fn section_error(&self, section: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            message: format!("[{section}]: {}", message.into()),
        }
    }

    fn require<'a, T>(&self, section: &str, field: &'a Option<T>) -> Result<&'a T> {
        field
            .as_ref()
            .ok_or_else(|| self.section_error(section, "section is missing"))
    }

    /// Build the board demanded by every subcommand except `oracle-check`.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        let section = self.require("grid", &self.grid)?;
        section
            .build()
            .map_err(|e| self.section_error("grid", e.to_string()))
    }

    pub fn simulate(&self) -> Result<&SimulateSection> {
        self.require("simulate", &self.simulate)
    }

    pub fn posterior(&self) -> Result<&PosteriorSection> {
        self.require("posterior", &self.posterior)
    }

    pub fn fit(&self) -> Result<&FitSection> {
        self.require("fit", &self.fit)
    }

    pub fn fit_heuristic(&self) -> Result<&FitHeuristicSection> {
        self.require("fit_heuristic", &self.fit_heuristic)
    }

    pub fn goal_infer(&self) -> Result<&GoalInferSection> {
        self.require("goal_infer", &self.goal_infer)
    }

    pub fn experiment(&self) -> Result<&ExperimentSection> {
        self.require("experiment", &self.experiment)
    }

    /// Oracle-check settings; the section is optional and defaults apply.
    pub fn oracle_check(&self) -> OracleCheckSection {
        self.oracle_check.clone().unwrap_or_default()
    }

    /// Wrap a semantic error from section interpretation with file context.
    pub fn in_section(&self, section: &str, e: CliError) -> CliError {
        match e {
            CliError::Config { .. } => e,
            other => self.section_error(section, other.to_string()),
        }
    }
}

/// Board description; field names and coordinate conventions match the
/// on-disk dataset format (`[x, y]` pairs, feature map by name).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub obstacles: Vec<[i32; 2]>,
    pub start: [i32; 2],
    #[serde(default)]
    pub goals: Vec<[i32; 2]>,
    pub horizon: usize,
    pub feature_map: String,
}

impl GridSection {
    pub fn build(&self) -> Result<GridSpec> {
        let feature_map: FeatureMap = self.feature_map.parse()?;
        let obstacles: Vec<(i32, i32)> = self.obstacles.iter().map(|p| (p[0], p[1])).collect();
        let goals: Vec<(i32, i32)> = self.goals.iter().map(|p| (p[0], p[1])).collect();
        Ok(GridSpec::new(
            self.width,
            self.height,
            &obstacles,
            (self.start[0], self.start[1]),
            &goals,
            self.horizon,
            feature_map,
        )?)
    }

    /// Reconstruct the section from a built board (for report details).
    pub fn from_spec(spec: &GridSpec) -> GridSection {
        let pair = |s: bsdr_core::grid::State| [s.x, s.y];
        let mut obstacles = Vec::new();
        for y in 0..spec.height() as i32 {
            for x in 0..spec.width() as i32 {
                let s = bsdr_core::grid::State::new(x, y);
                if !spec.is_valid(s) {
                    obstacles.push([x, y]);
                }
            }
        }
        GridSection {
            width: spec.width(),
            height: spec.height(),
            obstacles,
            start: pair(spec.start()),
            goals: spec.goals().iter().copied().map(pair).collect(),
            horizon: spec.horizon(),
            feature_map: spec.feature_map().name().to_string(),
        }
    }
}

/// Prior over the joint parameter vector, selected by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl PriorSection {
    pub fn build(&self) -> Result<Prior> {
        let prior = match self.kind.as_str() {
            "uniform_grid" => Prior::UniformGrid,
            "unit_sphere_uniform" => Prior::UnitSphereUniform,
            "gaussian" => Prior::Gaussian {
                sigma: self.sigma.unwrap_or(10.0),
            },
            other => {
                return Err(CliError::Invalid(format!(
                "unknown prior {other:?} (expected uniform_grid, unit_sphere_uniform, or gaussian)"
            )))
            }
        };
        if self.sigma.is_some() && self.kind != "gaussian" {
            return Err(CliError::Invalid(format!(
                "prior {:?} takes no sigma",
                self.kind
            )));
        }
        prior.validate().map_err(CliError::from)?;
        Ok(prior)
    }
}

/// Synthetic-data generation: shared cost weights, one rationality
/// vector per agent id, and a fixed number of trajectories per agent.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub trajectories_per_agent: usize,
    pub theta_r: Vec<f64>,
    pub agents: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

/// Posterior evaluation over a discretized parameter grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorSection {
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub prior: Option<PriorSection>,
    #[serde(default)]
    pub budget: Option<u64>,
    pub theta_r: Vec<Vec<f64>>,
    #[serde(default)]
    pub theta_b: BTreeMap<String, Vec<Vec<f64>>>,
}

impl PosteriorSection {
    pub fn axes(&self) -> GridAxes {
        GridAxes {
            theta_r: self.theta_r.clone(),
            theta_b: self.theta_b.clone(),
        }
    }

    /// Grid posteriors default to a flat prior over the grid points.
    pub fn prior(&self) -> Result<Prior> {
        match &self.prior {
            Some(p) => p.build(),
            None => Ok(Prior::UniformGrid),
        }
    }
}

/// Gradient-based joint point estimation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub prior: Option<PriorSection>,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub gauge_fix: Option<bool>,
}

impl FitSection {
    pub fn opt_config(&self) -> OptConfig {
        let defaults = OptConfig::default();
        OptConfig {
            step_size: self.step_size.unwrap_or(defaults.step_size),
            max_iters: self.max_iters.unwrap_or(defaults.max_iters),
            tol: self.tol.unwrap_or(defaults.tol),
            gauge_fix: self.gauge_fix.unwrap_or(defaults.gauge_fix),
            init: None,
        }
    }

    /// Point estimation defaults to an isotropic Gaussian prior.
    pub fn prior(&self) -> Result<Prior> {
        match &self.prior {
            Some(p) => p.build(),
            None => Ok(Prior::Gaussian { sigma: 10.0 }),
        }
    }
}

/// Partition-free constrained heuristic fit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitHeuristicSection {
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl FitHeuristicSection {
    pub fn heuristic_config(&self) -> HeuristicConfig {
        let defaults = HeuristicConfig::default();
        HeuristicConfig {
            step_size: self.step_size.unwrap_or(defaults.step_size),
            max_iters: self.max_iters.unwrap_or(defaults.max_iters),
            tol: self.tol.unwrap_or(defaults.tol),
            init: None,
        }
    }
}

pub(crate) fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

/// Goal prediction from truncated trajectory prefixes in a dataset.
///
/// Candidates are alternative goal sets on the configured board; the
/// rationality vector per agent is taken as given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalInferSection {
    #[serde(default)]
    pub data: Option<String>,
    pub candidates: Vec<Vec<[i32; 2]>>,
    #[serde(default)]
    pub goal_prior: Option<Vec<f64>>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    pub theta_r: Vec<f64>,
    pub theta_b: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub true_goal_index: Option<usize>,
}

impl GoalInferSection {
    /// Candidate boards: the base layout with each goal set swapped in.
    pub fn candidate_specs(&self, base: &GridSpec) -> Result<Vec<GridSpec>> {
        if self.candidates.is_empty() {
            return Err(CliError::Invalid("candidates must be nonempty".into()));
        }
        let mut specs = Vec::with_capacity(self.candidates.len());
        for goals in &self.candidates {
            let pairs: Vec<(i32, i32)> = goals.iter().map(|p| (p[0], p[1])).collect();
            specs.push(base.with_goals(&pairs)?);
        }
        Ok(specs)
    }

    pub fn prior_weights(&self) -> Result<Vec<f64>> {
        match &self.goal_prior {
            Some(w) => {
                if w.len() != self.candidates.len() {
                    return Err(CliError::Invalid(format!(
                        "goal_prior has {} entries for {} candidates",
                        w.len(),
                        self.candidates.len()
                    )));
                }
                Ok(w.clone())
            }
            None => Ok(vec![
                1.0 / self.candidates.len() as f64;
                self.candidates.len()
            ]),
        }
    }

    pub fn validated_fractions(&self) -> Result<Vec<f64>> {
        validate_fractions(&self.fractions)
    }
}

pub(crate) fn validate_fractions(fractions: &[f64]) -> Result<Vec<f64>> {
    if fractions.is_empty() {
        return Err(CliError::Invalid("fractions must be nonempty".into()));
    }
    for &f in fractions {
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return Err(CliError::Invalid(format!("fraction {f} outside [0, 1]")));
        }
    }
    Ok(fractions.to_vec())
}

/// One table per experiment harness; `experiment <name>` picks one.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub recovery: Option<RecoveryConfig>,
    pub goal_inference: Option<GoalInferenceConfig>,
    pub generalization: Option<GeneralizationConfig>,
    pub prediction: Option<PredictionConfig>,
}

/// Randomized cross-check of the dynamic-programming forward model
/// against brute-force enumeration on small boards.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckSection {
    #[serde(default = "default_oracle_cases")]
    pub cases: usize,
    #[serde(default = "default_oracle_side")]
    pub max_side: usize,
    #[serde(default = "default_oracle_horizon")]
    pub max_horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_oracle_cases() -> usize {
    20
}

fn default_oracle_side() -> usize {
    3
}

fn default_oracle_horizon() -> usize {
    4
}

impl Default for OracleCheckSection {
    fn default() -> Self {
        OracleCheckSection {
            cases: default_oracle_cases(),
            max_side: default_oracle_side(),
            max_horizon: default_oracle_horizon(),
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("config.toml");
        let mut f = fs::File::create(&path).expect("create");
        f.write_all(text.as_bytes()).expect("write");
        (dir, path)
    }

    const GRID: &str = "[grid]\nwidth = 3\nheight = 2\nobstacles = [[1, 0]]\nstart = [0, 0]\ngoals = [[2, 1]]\nhorizon = 4\nfeature_map = \"bias_goal_dist\"\n";

    #[test]
    fn grid_section_builds_the_described_board() {
        let (_dir, path) = write_config(GRID);
        let config = Config::load(&path).expect("load");
        let spec = config.grid_spec().expect("spec");
        assert_eq!(spec.width(), 3);
        assert_eq!(spec.height(), 2);
        assert_eq!(spec.horizon(), 4);
        assert_eq!(spec.feature_dim(), 2);
        assert!(!spec.is_valid(bsdr_core::grid::State::new(1, 0)));
        assert_eq!(config.fingerprint.len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_file_named() {
        let (_dir, path) = write_config("[grid]\nwidht = 3\n");
        let err = Config::load(&path).unwrap_err().to_string();
        assert!(err.contains("config.toml"), "{err}");
        assert!(err.contains("widht"), "{err}");
    }

    #[test]
    fn missing_sections_are_reported_by_name() {
        let (_dir, path) = write_config(GRID);
        let config = Config::load(&path).expect("load");
        let err = config.fit().unwrap_err().to_string();
        assert!(err.contains("[fit]"), "{err}");
    }

    #[test]
    fn prior_names_map_to_prior_kinds() {
        let section = PriorSection {
            kind: "gaussian".into(),
            sigma: Some(2.0),
        };
        match section.build().expect("prior") {
            Prior::Gaussian { sigma } => assert_eq!(sigma, 2.0),
            other => panic!("unexpected prior {other:?}"),
        }
        let bad = PriorSection {
            kind: "uniform_grid".into(),
            sigma: Some(1.0),
        };
        assert!(bad.build().is_err());
        let unknown = PriorSection {
            kind: "cauchy".into(),
            sigma: None,
        };
        assert!(unknown.build().is_err());
    }

    #[test]
    fn fit_defaults_fill_unset_fields() {
        let (_dir, path) = write_config(&format!("{GRID}[fit]\nmax_iters = 17\n"));
        let config = Config::load(&path).expect("load");
        let opt = config.fit().expect("fit").opt_config();
        assert_eq!(opt.max_iters, 17);
        assert_eq!(opt.step_size, OptConfig::default().step_size);
        assert!(matches!(
            config.fit().expect("fit").prior().expect("prior"),
            Prior::Gaussian { sigma } if sigma == 10.0
        ));
    }

    #[test]
    fn goal_infer_candidates_swap_goal_sets() {
        let text = format!(
            "{GRID}[goal_infer]\ncandidates = [[[2, 1]], [[0, 1]]]\ntheta_r = [0.0, 1.0]\n[goal_infer.theta_b]\na0 = [1.0, 2.0]\n"
        );
        let (_dir, path) = write_config(&text);
        let config = Config::load(&path).expect("load");
        let base = config.grid_spec().expect("spec");
        let section = config.goal_infer().expect("section");
        let specs = section.candidate_specs(&base).expect("candidates");
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1].goals(), &[bsdr_core::grid::State::new(0, 1)]);
        let prior = section.prior_weights().expect("prior");
        assert_eq!(prior, vec![0.5, 0.5]);
        assert_eq!(
            section.validated_fractions().expect("fractions"),
            vec![0.25, 0.5, 0.75, 1.0]
        );
    }

    #[test]
    fn fractions_outside_the_unit_interval_are_rejected() {
        assert!(validate_fractions(&[0.5, 1.5]).is_err());
        assert!(validate_fractions(&[]).is_err());
        assert!(validate_fractions(&[0.0, 1.0]).is_ok());
    }

    #[test]
    fn grid_section_round_trips_through_a_spec() {
        let (_dir, path) = write_config(GRID);
        let config = Config::load(&path).expect("load");
        let spec = config.grid_spec().expect("spec");
        let back = GridSection::from_spec(&spec);
        assert_eq!(back.width, 3);
        assert_eq!(back.obstacles, vec![[1, 0]]);
        assert_eq!(back.start, [0, 0]);
        assert_eq!(back.goals, vec![[2, 1]]);
        assert_eq!(back.feature_map, "bias_goal_dist");
        assert_eq!(back.build().expect("rebuild"), spec);
    }
}
