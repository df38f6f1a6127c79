use serde::{Deserialize, Serialize};

use super::{EnergyBound, MatchState};
use crate::model::{Assignment, ScenarioInstance};

/// Bottleneck region, its slowest agent and the region with the most slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub bottleneck: usize,
    pub straggler: usize,
    pub donor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    DropStraggler,
    Swap,
    AddFromVoid,
    TransferFromDonor,
}

/// One unilateral or bilateral move of the matching game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOp {
    pub kind: OpKind,
    /// agent that moves (the straggler for drops and swaps)
    pub agent: usize,
    /// swap partner
    pub partner: Option<usize>,
    /// destination of `agent`; `None` is the void
    pub target: Option<usize>,
}

impl CandidateOp {
    pub fn apply(&self, assignment: &Assignment) -> Assignment {
        let mut out = assignment.clone();
        if let Some(p) = self.partner {
            out.set(p, assignment.target(self.agent));
        }
        out.set(self.agent, self.target);
        out
    }

    /// Agents whose region changes, with their new region (void excluded).
    pub fn arrivals(&self, assignment: &Assignment) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if let Some(k) = self.target {
            out.push((self.agent, k));
        }
        if let (Some(p), Some(k)) = (self.partner, assignment.target(self.agent)) {
            out.push((p, k));
        }
        out
    }
}

fn argmin_by<I: Iterator<Item = usize>>(items: I, key: impl Fn(usize) -> f64) -> Option<usize> {
    items.fold(None, |best, i| match best {
        Some(b) if key(b) <= key(i) => Some(b),
        _ => Some(i),
    })
}

fn argmax_by<I: Iterator<Item = usize>>(items: I, key: impl Fn(usize) -> f64) -> Option<usize> {
    items.fold(None, |best, i| match best {
        Some(b) if key(b) >= key(i) => Some(b),
        _ => Some(i),
    })
}

/// Bottleneck `argmax_k Delta_k`, straggler `argmax T` inside it and donor
/// `argmin_k Delta_k`; ties go to the lowest index. `None` when the state
/// has no finite cost.
pub fn identify_roles(state: &MatchState) -> Option<Roles> {
    if !state.cost.is_finite() {
        return None;
    }
    let k = state.deviations.len();
    let bottleneck = argmax_by(0..k, |r| state.deviations[r])?;
    let straggler = argmax_by(state.assignment.members(bottleneck).into_iter(), |n| {
        state.latencies[n]
    })?;
    let donor = argmin_by(0..k, |r| state.deviations[r])?;
    Some(Roles {
        bottleneck,
        straggler,
        donor,
    })
}

/// The restricted candidate set: drop the straggler, swap it with the
/// nearest active agent of another region, bring in the nearest idle agent,
/// and transfer the donor's agent nearest to the bottleneck. Moves that
/// would leave a region empty are never emitted.
pub fn build_candidates(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    roles: &Roles,
) -> Vec<CandidateOp> {
    let k_star = roles.bottleneck;
    let counts = assignment.counts(scenario.n_regions());
    let dist = |n: usize| scenario.move_distance(n, k_star);
    let mut out = Vec::new();

    if counts[k_star] > 1 {
        out.push(CandidateOp {
            kind: OpKind::DropStraggler,
            agent: roles.straggler,
            partner: None,
            target: None,
        });
    }
    let others =
        (0..scenario.n_agents()).filter(|&n| assignment.target(n).is_some_and(|k| k != k_star));
    if let Some(partner) = argmin_by(others, dist) {
        out.push(CandidateOp {
            kind: OpKind::Swap,
            agent: roles.straggler,
            partner: Some(partner),
            target: assignment.target(partner),
        });
    }
    if let Some(idle) = argmin_by(assignment.void_agents().into_iter(), dist) {
        out.push(CandidateOp {
            kind: OpKind::AddFromVoid,
            agent: idle,
            partner: None,
            target: Some(k_star),
        });
    }
    if roles.donor != k_star && counts[roles.donor] > 1 {
        let donor_agent = argmin_by(assignment.members(roles.donor).into_iter(), dist)
            .expect("donor region is not empty");
        out.push(CandidateOp {
            kind: OpKind::TransferFromDonor,
            agent: donor_agent,
            partner: None,
            target: Some(k_star),
        });
    }
    out
}

/// Smallest move-to-sense energy the bound admits for `agent` reaching
/// `region`.
pub fn min_move_energy(
    scenario: &ScenarioInstance,
    agent: usize,
    region: usize,
    bound: EnergyBound,
) -> f64 {
    let a = &scenario.agents[agent];
    let d = scenario.move_distance(agent, region);
    match bound {
        EnergyBound::Rolling => d * a.lambda1,
        EnergyBound::FullSpeed => d * (a.lambda1 + a.lambda2 * a.v_max),
    }
}

/// `true` when every arriving agent can afford its trip within the safety
/// margin `a * E_max`.
pub fn prune_energy(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    op: &CandidateOp,
    bound: EnergyBound,
) -> bool {
    let margin = scenario.system.a_safety;
    op.arrivals(assignment)
        .into_iter()
        .all(|(n, k)| min_move_energy(scenario, n, k, bound) <= margin * scenario.agents[n].e_max)
}
