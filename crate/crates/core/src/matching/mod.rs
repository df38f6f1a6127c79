//! Outer-layer matching game: two-phase initialization, the restricted
//! candidate set around the bottleneck region, energy pruning and the
//! best-response descent over topologies.

mod candidates;
mod hungarian;
mod init;

pub use candidates::*;
pub use hungarian::*;
pub use init::*;

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inner_solver::{bcd_solve, InnerError, InnerOptions};
use crate::model::{workflow_metrics, Assignment, ResourceAllocation, ScenarioInstance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("{agents} agents cannot cover {regions} regions")]
    TooFewAgents { agents: usize, regions: usize },
    #[error("initial topology is infeasible: {0}")]
    InitialInfeasible(InnerError),
}

/// Lower bound on the move-to-sense energy used by candidate pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyBound {
    /// `d * lambda1`, the infimum as the speed tends to zero
    Rolling,
    /// `d * (lambda1 + lambda2 * v_max)`, the cost at full speed
    FullSpeed,
}

/// Start point of each candidate's inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStart {
    /// the default start; the cost is then a pure function of the
    /// assignment and evaluations are cached
    Cold,
    /// the incumbent allocation adapted to the candidate topology
    Incumbent,
    /// both, keeping the cheaper result
    Best,
}

#[derive(Debug, Clone, Copy)]
pub struct MatchOptions {
    pub inner: InnerOptions,
    pub energy_bound: EnergyBound,
    pub start: CandidateStart,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            inner: InnerOptions::default(),
            energy_bound: EnergyBound::Rolling,
            start: CandidateStart::Incumbent,
        }
    }
}

/// A topology together with its inner-layer solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchState {
    pub assignment: Assignment,
    /// `J(mu)`, `+inf` when the inner layer finds no feasible allocation
    pub cost: f64,
    pub allocation: Option<ResourceAllocation>,
    /// per-region deviation, 0 for uncovered regions
    pub deviations: Vec<f64>,
    /// per-agent closed-loop latency, 0 for idle agents
    pub latencies: Vec<f64>,
    pub bcd_iterations: usize,
}

impl MatchState {
    /// Solves the inner layer for `assignment`. The error is kept so the
    /// caller can report why a topology failed.
    pub fn evaluate(
        scenario: &ScenarioInstance,
        assignment: Assignment,
        warm_start: Option<&ResourceAllocation>,
        opts: &InnerOptions,
    ) -> (MatchState, Option<InnerError>) {
        let mut state = MatchState {
            cost: f64::INFINITY,
            allocation: None,
            deviations: vec![0.0; scenario.n_regions()],
            latencies: vec![0.0; scenario.n_agents()],
            bcd_iterations: 0,
            assignment,
        };
        let sol = match bcd_solve(scenario, &state.assignment, warm_start, opts) {
            Ok(sol) => sol,
            Err(e) => return (state, Some(e)),
        };
        state.bcd_iterations = sol.trace.iterations;
        match workflow_metrics(scenario, &state.assignment, &sol.allocation) {
            Ok(m) => {
                state.deviations = m.deviations();
                for (n, am) in m.agents.iter().enumerate() {
                    state.latencies[n] = am.map_or(0.0, |a| a.t_total);
                }
                state.cost = sol.tau;
                state.allocation = Some(sol.allocation);
                (state, None)
            }
            Err(e) => (state, Some(InnerError::Model(e))),
        }
    }
}

/// Bookkeeping of one best-response step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub roles: Roles,
    pub candidates: usize,
    pub pruned: usize,
    /// candidates skipped because their topology was visited before
    pub revisits: usize,
    pub evaluated: usize,
    pub bcd_iterations: usize,
    pub accepted: Option<CandidateOp>,
    /// cost after the step
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `J` of the initial topology followed by one entry per accepted step
    pub costs: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// digests of every accepted topology, in visiting order
    pub visited: Vec<u64>,
    pub bcd_iterations: usize,
}

impl SolveReport {
    pub fn outer_iterations(&self) -> usize {
        self.costs.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterSolution {
    pub assignment: Assignment,
    pub allocation: ResourceAllocation,
    pub cost: f64,
    pub report: SolveReport,
}

/// Result of [`best_response_step`]: the improving state, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Option<MatchState>,
    pub record: StepRecord,
}

/// Memo of cold-start evaluations, valid because they depend on the
/// assignment alone.
#[derive(Default)]
struct Evaluator {
    cache: HashMap<Assignment, MatchState>,
}

impl Evaluator {
    fn evaluate_one(
        scenario: &ScenarioInstance,
        assignment: &Assignment,
        incumbent: &MatchState,
        opts: &MatchOptions,
    ) -> MatchState {
        let solve = |warm| MatchState::evaluate(scenario, assignment.clone(), warm, &opts.inner).0;
        let warm = incumbent.allocation.as_ref();
        match opts.start {
            CandidateStart::Cold => solve(None),
            CandidateStart::Incumbent => solve(warm),
            CandidateStart::Best => {
                let (cold, hot) = (solve(None), solve(warm));
                if hot.cost < cold.cost {
                    hot
                } else {
                    cold
                }
            }
        }
    }

    fn evaluate_all(
        &mut self,
        scenario: &ScenarioInstance,
        assignments: &[Assignment],
        incumbent: &MatchState,
        opts: &MatchOptions,
    ) -> Vec<(MatchState, bool)> {
        let cached = opts.start == CandidateStart::Cold;
        let fresh: Vec<MatchState> = assignments
            .par_iter()
            .filter(|a| !cached || !self.cache.contains_key(*a))
            .map(|a| Self::evaluate_one(scenario, a, incumbent, opts))
            .collect();
        let mut fresh = fresh.into_iter();
        let mut out = Vec::with_capacity(assignments.len());
        for a in assignments {
            if cached {
                if let Some(s) = self.cache.get(a) {
                    out.push((s.clone(), false));
                    continue;
                }
            }
            let s = fresh.next().expect("one evaluation per uncached candidate");
            if cached {
                self.cache.insert(a.clone(), s.clone());
            }
            out.push((s, true));
        }
        out
    }
}

/// One best-response move from `state`: builds the candidate set, prunes
/// unaffordable and already visited topologies, solves the rest and returns
/// the cheapest one if it is strictly better than `state`.
pub fn best_response_step(
    scenario: &ScenarioInstance,
    state: &MatchState,
    visited: &HashSet<u64>,
    opts: &MatchOptions,
) -> Option<StepOutcome> {
    step(scenario, state, visited, opts, &mut Evaluator::default())
}

fn step(
    scenario: &ScenarioInstance,
    state: &MatchState,
    visited: &HashSet<u64>,
    opts: &MatchOptions,
    evaluator: &mut Evaluator,
) -> Option<StepOutcome> {
    let roles = identify_roles(state)?;
    let ops = build_candidates(scenario, &state.assignment, &roles);
    let mut record = StepRecord {
        roles,
        candidates: ops.len(),
        pruned: 0,
        revisits: 0,
        evaluated: 0,
        bcd_iterations: 0,
        accepted: None,
        cost: state.cost,
    };
    let mut survivors = Vec::new();
    let mut topologies = Vec::new();
    for op in ops {
        if !prune_energy(scenario, &state.assignment, &op, opts.energy_bound) {
            record.pruned += 1;
            continue;
        }
        let next = op.apply(&state.assignment);
        if visited.contains(&next.digest()) {
            record.revisits += 1;
            continue;
        }
        survivors.push(op);
        topologies.push(next);
    }
    let results = evaluator.evaluate_all(scenario, &topologies, state, opts);
    let mut best: Option<(CandidateOp, MatchState)> = None;
    for (op, (s, fresh)) in survivors.into_iter().zip(results) {
        if fresh {
            record.evaluated += 1;
            record.bcd_iterations += s.bcd_iterations;
        }
        let better = match &best {
            Some((_, b)) => s.cost < b.cost,
            None => s.cost < state.cost,
        };
        if better {
            best = Some((op, s));
        }
    }
    let next = best.map(|(op, s)| {
        record.accepted = Some(op);
        record.cost = s.cost;
        s
    });
    Some(StepOutcome { next, record })
}

/// Best-response descent from the two-phase initial topology.
pub fn solve_outer(
    scenario: &ScenarioInstance,
    opts: &MatchOptions,
) -> Result<OuterSolution, MatchError> {
    let init = two_phase_init(scenario)?;
    solve_outer_from(scenario, init, opts)
}

/// Best-response descent from a given covering topology. Accepted steps
/// strictly decrease `J`, so no topology is visited twice and the loop ends
/// when no candidate improves.
pub fn solve_outer_from(
    scenario: &ScenarioInstance,
    init: Assignment,
    opts: &MatchOptions,
) -> Result<OuterSolution, MatchError> {
    if scenario.n_agents() < scenario.n_regions() {
        return Err(MatchError::TooFewAgents {
            agents: scenario.n_agents(),
            regions: scenario.n_regions(),
        });
    }
    let (mut state, err) = MatchState::evaluate(scenario, init, None, &opts.inner);
    if let Some(e) = err {
        return Err(MatchError::InitialInfeasible(e));
    }
    let mut evaluator = Evaluator::default();
    evaluator
        .cache
        .insert(state.assignment.clone(), state.clone());
    let mut visited = HashSet::from([state.assignment.digest()]);
    let mut report = SolveReport {
        costs: vec![state.cost],
        steps: Vec::new(),
        visited: vec![state.assignment.digest()],
        bcd_iterations: state.bcd_iterations,
    };
    while let Some(outcome) = step(scenario, &state, &visited, opts, &mut evaluator) {
        report.bcd_iterations += outcome.record.bcd_iterations;
        report.steps.push(outcome.record);
        let Some(next) = outcome.next else { break };
        let digest = next.assignment.digest();
        debug_assert!(!visited.contains(&digest));
        visited.insert(digest);
        report.visited.push(digest);
        report.costs.push(next.cost);
        state = next;
    }
    Ok(OuterSolution {
        allocation: state.allocation.expect("finite cost has an allocation"),
        assignment: state.assignment,
        cost: state.cost,
        report,
    })
}
