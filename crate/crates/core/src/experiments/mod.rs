//! Baseline schemes, parameter sweeps, the exhaustive matching oracle and
//! the command-line front end.

mod cli;
mod files;
mod oracle;
mod sweep;

pub use cli::*;
pub use files::*;
pub use oracle::*;
pub use sweep::*;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inner_solver::{bcd_solve, BcdSolution, CommStrategy, InnerError, InnerOptions};
use crate::matching::{
    distance_init, random_init, solve_outer, solve_outer_from, MatchError, MatchOptions,
    OuterSolution,
};
use crate::model::{Assignment, ResourceAllocation, ScenarioInstance};
use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("exhaustive search over {states} states exceeds the limit of {limit}")]
    OracleGuard { states: f64, limit: f64 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Matching(#[from] MatchError),
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

/// The proposed scheme and its seven baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    EqualBw,
    NoCoop,
    NoCompress,
    FixedSpeed,
    DistanceBased,
    WoTpi,
    Random,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Proposed,
        Scheme::EqualBw,
        Scheme::NoCoop,
        Scheme::NoCompress,
        Scheme::FixedSpeed,
        Scheme::DistanceBased,
        Scheme::WoTpi,
        Scheme::Random,
    ];

    /// Baselines that freeze part of the inner problem on the proposed
    /// topology.
    pub const RESTRICTED: [Scheme; 4] = [
        Scheme::EqualBw,
        Scheme::NoCoop,
        Scheme::NoCompress,
        Scheme::FixedSpeed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::EqualBw => "equal_bw",
            Scheme::NoCoop => "no_coop",
            Scheme::NoCompress => "no_compress",
            Scheme::FixedSpeed => "fixed_speed",
            Scheme::DistanceBased => "distance_based",
            Scheme::WoTpi => "wo_tpi",
            Scheme::Random => "random",
        }
    }

    /// Schemes that run on the proposed topology.
    pub fn uses_proposed_topology(self) -> bool {
        self == Scheme::Proposed || Scheme::RESTRICTED.contains(&self)
    }

    /// Inner options of the scheme; outer baselines use the proposed ones.
    pub fn inner_options(self, base: &InnerOptions) -> InnerOptions {
        let mut o = *base;
        match self {
            Scheme::EqualBw => o.comm = CommStrategy::EqualBandwidth,
            Scheme::NoCompress => o.compression = false,
            Scheme::FixedSpeed => o.fixed_speed = true,
            _ => {}
        }
        o
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub matching: MatchOptions,
    /// restart the full inner solver from every restricted baseline's
    /// allocation and keep the best result
    pub refine: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            matching: MatchOptions::default(),
            refine: true,
        }
    }
}

impl RunOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        let mut o = RunOptions::default();
        o.matching.inner.epsilon = epsilon;
        o
    }
}

/// Outcome of one scheme on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// worst-case deviation, `None` when infeasible
    pub tau: Option<f64>,
    pub assignment: Option<Assignment>,
    pub allocation: Option<ResourceAllocation>,
    pub outer_iters: usize,
    pub bcd_iters_total: usize,
    pub error: Option<String>,
}

impl SchemeRun {
    fn failed(scheme: Scheme, error: impl fmt::Display) -> Self {
        SchemeRun {
            scheme,
            tau: None,
            assignment: None,
            allocation: None,
            outer_iters: 0,
            bcd_iters_total: 0,
            error: Some(error.to_string()),
        }
    }

    pub fn feasible(&self) -> bool {
        self.tau.is_some()
    }
}

/// Solves the inner layer of `scheme` on a fixed topology. No Coop solves
/// the scenario with the cooperation gain switched off; its allocation stays
/// feasible in the original one because cooperation only raises accuracy,
/// and the deviation does not depend on it.
pub fn solve_restricted(
    scheme: Scheme,
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    inner: &InnerOptions,
) -> Result<BcdSolution, InnerError> {
    let opts = scheme.inner_options(inner);
    if scheme == Scheme::NoCoop {
        bcd_solve(&scenario.without_cooperation(), assignment, None, &opts)
    } else {
        bcd_solve(scenario, assignment, None, &opts)
    }
}

/// Best of the cold inner solution and full solves warm-started from each
/// restricted allocation. Every restricted allocation is feasible for the
/// full problem and the solver never increases the deviation from its
/// start, so the result is no worse than any of them.
pub fn refine(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    cold: BcdSolution,
    restricted: &[&BcdSolution],
    inner: &InnerOptions,
) -> (BcdSolution, usize) {
    let mut best = cold;
    let mut iterations = 0;
    for r in restricted {
        let Ok(sol) = bcd_solve(scenario, assignment, Some(&r.allocation), inner) else {
            continue;
        };
        iterations += sol.trace.iterations;
        if sol.trace.warm_started && sol.tau < best.tau {
            best = sol;
        }
    }
    (best, iterations)
}

/// Every requested scheme that runs on one topology: the proposed inner
/// solver and the restricted baselines. `outer_iters` and `outer_bcd` are
/// charged to the proposed row.
pub fn run_on_topology(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    cold: Result<BcdSolution, InnerError>,
    schemes: &[Scheme],
    opts: &RunOptions,
    outer_iters: usize,
    outer_bcd: usize,
) -> Vec<SchemeRun> {
    let inner = &opts.matching.inner;
    let want_proposed = schemes.contains(&Scheme::Proposed);
    let restricted: Vec<(Scheme, Result<BcdSolution, InnerError>)> = Scheme::RESTRICTED
        .into_iter()
        .filter(|s| schemes.contains(s) || (want_proposed && opts.refine))
        .map(|s| (s, solve_restricted(s, scenario, assignment, inner)))
        .collect();
    let row = |scheme: Scheme, sol: &Result<BcdSolution, InnerError>, iters: usize| match sol {
        Ok(sol) => SchemeRun {
            scheme,
            tau: Some(sol.tau),
            assignment: Some(assignment.clone()),
            allocation: Some(sol.allocation.clone()),
            outer_iters,
            bcd_iters_total: iters + sol.trace.iterations,
            error: None,
        },
        Err(e) => SchemeRun {
            outer_iters,
            ..SchemeRun::failed(scheme, e)
        },
    };
    let mut out = Vec::new();
    for &scheme in schemes {
        if scheme == Scheme::Proposed {
            let proposed = match &cold {
                Ok(c) => {
                    let starts: Vec<&BcdSolution> = restricted
                        .iter()
                        .filter_map(|(_, r)| r.as_ref().ok())
                        .collect();
                    let spent: usize = starts.iter().map(|s| s.trace.iterations).sum();
                    let (best, extra) = refine(scenario, assignment, c.clone(), &starts, inner);
                    let total = outer_bcd + c.trace.iterations + spent + extra;
                    let mut r = row(scheme, &Ok(best), 0);
                    r.bcd_iters_total = total;
                    r
                }
                Err(e) => SchemeRun {
                    outer_iters,
                    ..SchemeRun::failed(scheme, e)
                },
            };
            out.push(proposed);
        } else if let Some((_, sol)) = restricted.iter().find(|(s, _)| *s == scheme) {
            out.push(row(scheme, sol, 0));
        }
    }
    out
}

/// Runs one outer baseline: its topology, then the proposed inner solver.
pub fn run_outer_baseline(
    scheme: Scheme,
    scenario: &ScenarioInstance,
    opts: &RunOptions,
) -> SchemeRun {
    let topology = match scheme {
        Scheme::DistanceBased => distance_init(scenario).map(|a| (a, 0, 0)),
        Scheme::Random => random_init(scenario).map(|a| (a, 0, 0)),
        Scheme::WoTpi => random_init(scenario)
            .and_then(|a| solve_outer_from(scenario, a, &opts.matching))
            .map(|s| {
                let iters = s.report.outer_iterations();
                (s.assignment, iters, s.report.bcd_iterations)
            }),
        _ => panic!("{scheme} is not an outer baseline"),
    };
    let (assignment, outer_iters, outer_bcd) = match topology {
        Ok(t) => t,
        Err(e) => return SchemeRun::failed(scheme, e),
    };
    let cold = bcd_solve(scenario, &assignment, None, &opts.matching.inner);
    let mut run = run_on_topology(
        scenario,
        &assignment,
        cold,
        &[Scheme::Proposed],
        opts,
        outer_iters,
        outer_bcd,
    )
    .remove(0);
    run.scheme = scheme;
    run
}

/// Runs several schemes on one scenario, solving the proposed matching at
/// most once. When `topology` is given the proposed-topology schemes reuse
/// it instead, falling back to a fresh matching if it is infeasible here.
pub fn run_schemes(
    scenario: &ScenarioInstance,
    schemes: &[Scheme],
    topology: Option<&Assignment>,
    opts: &RunOptions,
) -> Vec<SchemeRun> {
    let on_topology: Vec<Scheme> = schemes
        .iter()
        .copied()
        .filter(|s| s.uses_proposed_topology())
        .collect();
    let mut runs = Vec::new();
    if !on_topology.is_empty() {
        runs.extend(proposed_topology_runs(
            scenario,
            &on_topology,
            topology,
            opts,
        ));
    }
    for &s in schemes {
        if !s.uses_proposed_topology() {
            runs.push(run_outer_baseline(s, scenario, opts));
        }
    }
    schemes
        .iter()
        .map(|s| {
            let i = runs
                .iter()
                .position(|r| r.scheme == *s)
                .expect("every scheme ran");
            runs.swap_remove(i)
        })
        .collect()
}

fn proposed_topology_runs(
    scenario: &ScenarioInstance,
    schemes: &[Scheme],
    topology: Option<&Assignment>,
    opts: &RunOptions,
) -> Vec<SchemeRun> {
    let inner = &opts.matching.inner;
    if let Some(a) = topology {
        if let Ok(cold) = bcd_solve(scenario, a, None, inner) {
            return run_on_topology(scenario, a, Ok(cold), schemes, opts, 0, 0);
        }
    }
    match solve_outer(scenario, &opts.matching) {
        Ok(OuterSolution {
            assignment,
            allocation,
            cost,
            report,
        }) => {
            let cold = bcd_solve(scenario, &assignment, Some(&allocation), inner);
            debug_assert!(cold.as_ref().map_or(true, |s| s.tau <= cost));
            run_on_topology(
                scenario,
                &assignment,
                cold,
                schemes,
                opts,
                report.outer_iterations(),
                report.bcd_iterations,
            )
        }
        Err(e) => schemes.iter().map(|&s| SchemeRun::failed(s, &e)).collect(),
    }
}

/// Runs one scheme on one scenario.
pub fn run_scheme(scheme: Scheme, scenario: &ScenarioInstance, opts: &RunOptions) -> SchemeRun {
    run_schemes(scenario, &[scheme], None, opts).remove(0)
}
