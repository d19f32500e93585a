//! Trajectory datasets on disk: one JSON object per line.
//!
//! Each line holds `{"agent_id": ..., "states": [[x, y], ...]}` plus an
//! optional `"actions"` list of action indices. Loading validates every
//! record against the board and reports the first offending line;
//! saving writes agents in sorted order with a stable field order, so a
//! load/save round trip is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use bsdr_core::grid::{Action, GridSpec, State, Trajectory};
use bsdr_core::inference::Dataset;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// One trajectory as serialized; field order is the on-disk order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub agent_id: String,
    pub states: Vec<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(agent_id: &str, traj: &Trajectory) -> TrajectoryRecord {
        TrajectoryRecord {
            agent_id: agent_id.to_string(),
            states: traj.states.iter().map(|s| [s.x, s.y]).collect(),
            actions: traj
                .actions
                .as_ref()
                .map(|actions| actions.iter().map(|a| a.index()).collect()),
        }
    }

    pub fn into_trajectory(self) -> Result<Trajectory> {
        let states: Vec<State> = self.states.iter().map(|p| State::new(p[0], p[1])).collect();
        let actions = match self.actions {
            None => None,
            Some(indices) => {
                let mut actions = Vec::with_capacity(indices.len());
                for (t, i) in indices.iter().enumerate() {
                    let action = Action::from_index(*i).ok_or_else(|| {
                        CliError::Invalid(format!(
                            "action index {i} at step {t} is outside 0..{}",
                            Action::COUNT
                        ))
                    })?;
                    actions.push(action);
                }
                Some(actions)
            }
        };
        Ok(Trajectory {
            states,
            actions,
            agent_id: Some(self.agent_id),
        })
    }
}

/// Load a dataset, validating every trajectory against the board.
///
/// Errors carry the 1-based line number of the offending record. An
/// empty file yields an empty dataset plus a warning.
pub fn load_dataset(path: &Path, spec: &GridSpec) -> Result<(Dataset, Vec<String>)> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| CliError::io(&shown, e))?;
    let mut groups: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut records = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| CliError::DatasetLine {
            path: shown.clone(),
            line: lineno,
            message,
        };
        let record: TrajectoryRecord =
            serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let agent_id = record.agent_id.clone();
        if agent_id.is_empty() {
            return Err(fail("agent_id must be nonempty".into()));
        }
        let traj = record.into_trajectory().map_err(|e| fail(e.to_string()))?;
        spec.validate_trajectory(&traj)
            .map_err(|e| fail(e.to_string()))?;
        groups.entry(agent_id).or_default().push(traj);
        records += 1;
    }
    if records == 0 {
        warnings.push(format!("{shown}: no trajectory records; dataset is empty"));
        return Ok((Dataset::empty(spec.clone()), warnings));
    }
    let dataset = Dataset::new(spec.clone(), groups)?;
    Ok((dataset, warnings))
}

/// Serialize one trajectory record as a single JSON line.
pub fn record_line(record: &TrajectoryRecord) -> String {
    serde_json::to_string(record).expect("trajectory records serialize")
}

/// Write a dataset with agents in sorted order, one record per line,
/// newline-terminated.
pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let shown = path.display().to_string();
    let mut out = Vec::new();
    for (agent_id, agent) in data.agents() {
        for traj in agent.trajectories() {
            out.extend_from_slice(
                record_line(&TrajectoryRecord::from_trajectory(agent_id, traj)).as_bytes(),
            );
            out.push(b'\n');
        }
    }
    let mut file = fs::File::create(path).map_err(|e| CliError::io(&shown, e))?;
    file.write_all(&out).map_err(|e| CliError::io(&shown, e))?;
    Ok(())
}
