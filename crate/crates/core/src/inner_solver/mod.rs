//! Inner-layer resource allocation for a fixed topology: closed-form
//! move-to-sense speed, the sensing/computation, communication and control
//! blocks, and the block-coordinate-descent loop that ties them together.

mod bcd;
mod comm;
mod control;
mod init;
mod sca;
mod sense_compute;
mod speed;

pub use bcd::*;
pub use comm::*;
pub use control::*;
pub use init::*;
pub use sca::*;
pub use sense_compute::*;
pub use speed::*;

use thiserror::Error;

use crate::convex_kit::BarrierOptions;
use crate::model::{
    agent_metrics, objective_value, AgentMetrics, Assignment, ModelError, ResourceAllocation,
    ScenarioInstance,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InnerError {
    #[error("region {0} has no assigned agent")]
    Uncovered(usize),
    #[error("region {region}: accuracy threshold {threshold} is unreachable below the ceiling {ceiling}")]
    UnreachableAccuracy {
        region: usize,
        threshold: f64,
        ceiling: f64,
    },
    #[error("agent {agent} cannot afford the trip to its region")]
    Kinematics { agent: usize },
    #[error("agent {agent} has no residual energy for the {phase} phase")]
    Energy { agent: usize, phase: &'static str },
    #[error("bandwidth budget cannot meet any deviation target")]
    Bandwidth,
    #[error("{block} block has no feasible point for region {region}")]
    BlockInfeasible { block: &'static str, region: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the communication block allocates bandwidth and power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommStrategy {
    /// Bisection on the deviation target with per-agent minimal bandwidth.
    Bisection,
    /// One barrier solve over every agent's bandwidth, power and rate.
    Joint,
    /// Bandwidth pinned at `B_tot / N`; only power is optimized.
    EqualBandwidth,
}

#[derive(Debug, Clone, Copy)]
pub struct InnerOptions {
    /// stop when successive deviations differ by less than this
    pub epsilon: f64,
    pub max_iter: usize,
    pub comm: CommStrategy,
    /// when false the compression ratio is pinned at 1
    pub compression: bool,
    /// when true both cruising speeds are pinned at `v_max / 2`
    pub fixed_speed: bool,
    pub barrier: BarrierOptions,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            epsilon: 1e-3,
            max_iter: 300,
            comm: CommStrategy::Bisection,
            compression: true,
            fixed_speed: false,
            barrier: BarrierOptions::default(),
        }
    }
}

/// Worst-case deviation of a feasible allocation; `None` when any constraint
/// is violated beyond the shared tolerance.
pub fn true_tau(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
) -> Option<f64> {
    objective_value(scenario, assignment, alloc)
        .ok()
        .filter(|t| t.is_finite())
}

/// Dispatched agents grouped by region, after a coverage check.
pub(crate) fn groups(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
) -> Result<Vec<Vec<usize>>, InnerError> {
    let groups: Vec<Vec<usize>> = (0..scenario.n_regions())
        .map(|k| assignment.members(k))
        .collect();
    if let Some(k) = groups.iter().position(|g| g.is_empty()) {
        return Err(InnerError::Uncovered(k));
    }
    Ok(groups)
}

/// True per-agent metrics of every dispatched agent.
pub(crate) fn metrics_of(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
) -> Result<Vec<Option<AgentMetrics>>, InnerError> {
    let counts = assignment.counts(scenario.n_regions());
    let mut out = vec![None; scenario.n_agents()];
    for (n, k) in assignment.dispatched() {
        let res = alloc
            .get(n)
            .ok_or(ModelError::MissingAllocation { agent: n })?;
        out[n] = Some(agent_metrics(scenario, n, k, counts[k], res)?);
    }
    Ok(out)
}
