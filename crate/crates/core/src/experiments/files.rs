use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::model::{AgentResources, Assignment, ResourceAllocation};

/// One agent of a solution file; idle agents carry neither region nor
/// resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub agent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<AgentResources>,
}

/// Topology and allocation as written by `solve` and read by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub tau: f64,
    pub agents: Vec<AgentEntry>,
}

impl SolutionFile {
    pub fn new(tau: f64, assignment: &Assignment, alloc: &ResourceAllocation) -> Self {
        let agents = (0..assignment.n_agents())
            .map(|n| AgentEntry {
                agent: n,
                region: assignment.target(n),
                resources: alloc.get(n).copied(),
            })
            .collect();
        SolutionFile { tau, agents }
    }

    pub fn assignment(&self) -> Assignment {
        Assignment::new(self.agents.iter().map(|a| a.region).collect())
    }

    pub fn allocation(&self) -> ResourceAllocation {
        let mut out = ResourceAllocation::empty(self.agents.len());
        for (slot, a) in out.agents.iter_mut().zip(&self.agents) {
            *slot = a.resources;
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ExperimentError> {
        let text = toml::to_string(self).map_err(|e| file_error(path, e))?;
        std::fs::write(path, text).map_err(|e| file_error(path, e))
    }

    pub fn load(path: &Path) -> Result<SolutionFile, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        let file: SolutionFile = toml::from_str(&text).map_err(|e| file_error(path, e))?;
        if let Some((i, a)) = file.agents.iter().enumerate().find(|(i, a)| a.agent != *i) {
            return Err(file_error(
                path,
                format!("entry {i} describes agent {}, expected {i}", a.agent),
            ));
        }
        Ok(file)
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
