use serde::{Deserialize, Serialize};

use super::{
    block_comm, block_comm_equal, block_comm_joint, block_control, block_sense_compute,
    fixed_ms_speed, initial_allocation, metrics_of, ms_speed_for_distance, repair_warm_start,
    true_tau, CommStrategy, InnerError, InnerOptions, ScaState,
};
use crate::model::{Assignment, ResourceAllocation, ScenarioInstance};

/// Deviation after the speed, sensing/computation, communication and
/// control blocks of one iteration.
pub type BlockTaus = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdTrace {
    /// deviation at the start point followed by one entry per iteration
    pub taus: Vec<f64>,
    pub block_taus: Vec<BlockTaus>,
    pub converged: bool,
    pub iterations: usize,
    /// transmit power each agent started from
    pub initial_power: Vec<Option<f64>>,
    pub warm_started: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdSolution {
    pub allocation: ResourceAllocation,
    pub tau: f64,
    pub trace: BcdTrace,
}

/// Inner-layer solve for a fixed topology.
///
/// Each iteration applies the closed-form speed, then the three convex
/// blocks, re-expanding the SCA surrogates at the current point. A block
/// result is kept only when it is feasible and does not raise the true
/// deviation, so the trace is non-increasing. Stops when an iteration
/// improves the deviation by less than `opts.epsilon`.
pub fn bcd_solve(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    warm_start: Option<&ResourceAllocation>,
    opts: &InnerOptions,
) -> Result<BcdSolution, InnerError> {
    let repaired = warm_start.and_then(|w| repair_warm_start(scenario, assignment, w, opts));
    let warm_started = repaired.is_some();
    let mut alloc = match repaired {
        Some(a) => a,
        None => initial_allocation(scenario, assignment, opts)?,
    };
    let mut tau = true_tau(scenario, assignment, &alloc).ok_or_else(|| {
        let err = crate::model::objective_value(scenario, assignment, &alloc)
            .err()
            .map(InnerError::Model);
        err.unwrap_or(InnerError::Bandwidth)
    })?;
    let mut trace = BcdTrace {
        taus: vec![tau],
        block_taus: Vec::new(),
        converged: false,
        iterations: 0,
        initial_power: alloc.agents.iter().map(|a| a.map(|r| r.p)).collect(),
        warm_started,
    };

    for _ in 0..opts.max_iter {
        let start = tau;
        let mut blocks = [tau; 4];

        if let Ok(c) = speed_block(scenario, assignment, &alloc, opts) {
            accept(scenario, assignment, c, &mut alloc, &mut tau);
        }
        blocks[0] = tau;

        let sca = ScaState::from_allocation(scenario, assignment, &alloc);
        if let Ok(c) = block_sense_compute(scenario, assignment, &alloc, &sca, opts) {
            accept(scenario, assignment, c.allocation, &mut alloc, &mut tau);
        }
        blocks[1] = tau;

        let free_speed = !opts.fixed_speed;
        let comm = match opts.comm {
            CommStrategy::Bisection => block_comm(scenario, assignment, &alloc, tau, free_speed),
            CommStrategy::Joint => block_comm_joint(scenario, assignment, &alloc, &opts.barrier),
            CommStrategy::EqualBandwidth => {
                block_comm_equal(scenario, assignment, &alloc, free_speed)
            }
        };
        if let Ok(c) = comm {
            accept(scenario, assignment, c.allocation, &mut alloc, &mut tau);
        }
        blocks[2] = tau;

        if let Ok(c) = block_control(scenario, assignment, &alloc, opts) {
            accept(scenario, assignment, c, &mut alloc, &mut tau);
        }
        blocks[3] = tau;

        trace.block_taus.push(blocks);
        trace.taus.push(tau);
        trace.iterations += 1;
        if (start - tau).abs() < opts.epsilon {
            trace.converged = true;
            break;
        }
    }
    Ok(BcdSolution {
        allocation: alloc,
        tau,
        trace,
    })
}

/// `J(mu)`: the converged deviation, or `+inf` when the topology admits no
/// feasible allocation.
pub fn topology_cost(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    warm_start: Option<&ResourceAllocation>,
    opts: &InnerOptions,
) -> f64 {
    bcd_solve(scenario, assignment, warm_start, opts)
        .map(|s| s.tau)
        .unwrap_or(f64::INFINITY)
}

fn accept(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    candidate: ResourceAllocation,
    alloc: &mut ResourceAllocation,
    tau: &mut f64,
) -> bool {
    match true_tau(scenario, assignment, &candidate) {
        Some(t) if t <= *tau => {
            *alloc = candidate;
            *tau = t;
            true
        }
        _ => false,
    }
}

/// Closed-form move-to-sense speeds given the energy of every other phase.
pub fn speed_block(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    opts: &InnerOptions,
) -> Result<ResourceAllocation, InnerError> {
    let metrics = metrics_of(scenario, assignment, alloc)?;
    let mut out = alloc.clone();
    for (n, _) in assignment.dispatched() {
        let m = metrics[n].as_ref().expect("dispatched agent has metrics");
        let a = &scenario.agents[n];
        let e_other = m.e_s + m.e_c + m.e_mt + m.e_tr;
        let v = if opts.fixed_speed {
            fixed_ms_speed(m.d_ms, a, e_other)?
        } else {
            ms_speed_for_distance(m.d_ms, a, e_other)?
        };
        out.agents[n].as_mut().expect("dispatched").v_ms = v;
    }
    Ok(out)
}
