use super::{hungarian, MatchError};
use crate::model::{Assignment, ScenarioInstance};
use crate::scenario::{Uniform, MATCHING_STREAM};

fn check_sizes(scenario: &ScenarioInstance) -> Result<(), MatchError> {
    let (n, k) = (scenario.n_agents(), scenario.n_regions());
    if n < k {
        return Err(MatchError::TooFewAgents {
            agents: n,
            regions: k,
        });
    }
    Ok(())
}

/// One agent per region minimizing the summed weights `weight(agent, region)`.
fn base_matching(
    scenario: &ScenarioInstance,
    weight: impl Fn(usize, usize) -> f64,
) -> Result<Assignment, MatchError> {
    check_sizes(scenario)?;
    let (n, k) = (scenario.n_agents(), scenario.n_regions());
    let cost: Vec<f64> = (0..k)
        .flat_map(|r| (0..n).map(move |a| (r, a)))
        .map(|(r, a)| weight(a, r))
        .collect();
    let (cols, _) = hungarian(&cost, k, n).ok_or(MatchError::TooFewAgents {
        agents: n,
        regions: k,
    })?;
    let mut out = Assignment::all_void(n);
    for (r, a) in cols.into_iter().enumerate() {
        out.set(a, Some(r));
    }
    Ok(out)
}

/// Assigns every idle agent to its lowest-weight region (lowest index on
/// ties).
fn fill_void(
    scenario: &ScenarioInstance,
    mut assignment: Assignment,
    weight: impl Fn(usize, usize) -> f64,
) -> Assignment {
    for n in assignment.void_agents() {
        let best = (0..scenario.n_regions())
            .min_by(|&a, &b| weight(n, a).total_cmp(&weight(n, b)))
            .expect("at least one region");
        assignment.set(n, Some(best));
    }
    assignment
}

fn volatility_weight(scenario: &ScenarioInstance) -> impl Fn(usize, usize) -> f64 + '_ {
    move |n, k| scenario.move_distance(n, k) / scenario.regions[k].w_rate
}

/// First initialization phase: Hungarian matching of one agent per region
/// with weights `d_ms / W_k`. Other agents stay idle.
pub fn init_phase1_hungarian(scenario: &ScenarioInstance) -> Result<Assignment, MatchError> {
    base_matching(scenario, volatility_weight(scenario))
}

/// Second initialization phase: every idle agent joins the region with the
/// smallest `d_ms / W_k`.
pub fn init_phase2_greedy(scenario: &ScenarioInstance, partial: Assignment) -> Assignment {
    fill_void(scenario, partial, volatility_weight(scenario))
}

/// Two-phase initialization: Hungarian base matching, then full deployment.
pub fn two_phase_init(scenario: &ScenarioInstance) -> Result<Assignment, MatchError> {
    let partial = init_phase1_hungarian(scenario)?;
    Ok(init_phase2_greedy(scenario, partial))
}

/// Matching that minimizes the total move-to-sense distance: Hungarian on
/// pure distances for coverage, then every other agent to its nearest region.
pub fn distance_init(scenario: &ScenarioInstance) -> Result<Assignment, MatchError> {
    let dist = |n: usize, k: usize| scenario.move_distance(n, k);
    let partial = base_matching(scenario, dist)?;
    Ok(fill_void(scenario, partial, dist))
}

/// Each agent drawn uniformly from the regions and the void, then repaired
/// for coverage. Deterministic in the scenario seed.
pub fn random_init(scenario: &ScenarioInstance) -> Result<Assignment, MatchError> {
    check_sizes(scenario)?;
    let k = scenario.n_regions();
    let mut rng = Uniform::new(scenario.seed, MATCHING_STREAM);
    let targets = (0..scenario.n_agents())
        .map(|_| {
            let c = (rng.draw(0.0, (k + 1) as f64) as usize).min(k);
            (c < k).then_some(c)
        })
        .collect();
    coverage_repair(scenario, Assignment::new(targets))
}

/// Covers every empty region, in index order, with the nearest agent that
/// can leave its current place without uncovering another region.
pub fn coverage_repair(
    scenario: &ScenarioInstance,
    mut assignment: Assignment,
) -> Result<Assignment, MatchError> {
    check_sizes(scenario)?;
    for k in 0..scenario.n_regions() {
        let counts = assignment.counts(scenario.n_regions());
        if counts[k] > 0 {
            continue;
        }
        let n = (0..scenario.n_agents())
            .filter(|&n| assignment.target(n).is_none_or(|j| counts[j] > 1))
            .min_by(|&a, &b| {
                scenario
                    .move_distance(a, k)
                    .total_cmp(&scenario.move_distance(b, k))
            })
            .ok_or(MatchError::TooFewAgents {
                agents: scenario.n_agents(),
                regions: scenario.n_regions(),
            })?;
        assignment.set(n, Some(k));
    }
    Ok(assignment)
}
