use rayon::prelude::*;

use super::ExperimentError;
use crate::inner_solver::{topology_cost, InnerOptions};
use crate::model::{Assignment, ScenarioInstance};

/// Largest search space the exhaustive oracle accepts.
pub const ORACLE_LIMIT: f64 = 1e5;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub assignment: Assignment,
    pub cost: f64,
    /// coverage-feasible topologies that were solved
    pub states: usize,
}

/// Every assignment of `n_agents` agents to `n_regions` regions or the void
/// that leaves no region empty, in lexicographic order of the targets.
pub fn covering_assignments(n_agents: usize, n_regions: usize) -> Vec<Assignment> {
    let base = n_regions + 1;
    let total = base.pow(n_agents as u32);
    (0..total)
        .map(|mut code| {
            let targets = (0..n_agents)
                .map(|_| {
                    let c = code % base;
                    code /= base;
                    (c < n_regions).then_some(c)
                })
                .collect();
            Assignment::new(targets)
        })
        .filter(|a| a.covers(n_regions))
        .collect()
}

/// Global minimum of `J` over every coverage-feasible topology, each solved
/// from the default start. Ties go to the first topology in enumeration
/// order.
pub fn oracle_exhaustive_matching(
    scenario: &ScenarioInstance,
    opts: &InnerOptions,
) -> Result<OracleResult, ExperimentError> {
    let (n, k) = (scenario.n_agents(), scenario.n_regions());
    let states = ((k + 1) as f64).powi(n as i32);
    if states > ORACLE_LIMIT {
        return Err(ExperimentError::OracleGuard {
            states,
            limit: ORACLE_LIMIT,
        });
    }
    let candidates = covering_assignments(n, k);
    let costs: Vec<f64> = candidates
        .par_iter()
        .map(|a| topology_cost(scenario, a, None, opts))
        .collect();
    let (best, cost) =
        costs.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bc), (i, &c)| {
                if c < bc {
                    (i, c)
                } else {
                    (bi, bc)
                }
            },
        );
    Ok(OracleResult {
        assignment: candidates[best].clone(),
        cost,
        states: candidates.len(),
    })
}
