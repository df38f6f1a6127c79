use std::fmt;

use serde::{Deserialize, Serialize};

use super::physics::*;
use super::{
    AgentResources, Assignment, ModelError, ResourceAllocation, ScenarioInstance, FEAS_ABS_TOL,
    FEAS_REL_TOL,
};

/// Phase-by-phase delay and energy of one dispatched agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub region: usize,
    pub d_ms: f64,
    pub t_ms: f64,
    pub t_sense: f64,
    pub t_c: f64,
    pub t_mt: f64,
    pub t_p: f64,
    pub t_tr: f64,
    pub e_ms: f64,
    pub e_s: f64,
    pub e_c: f64,
    pub e_mt: f64,
    pub e_tr: f64,
    pub e_tot: f64,
    /// closed-loop latency T_{n,k}
    pub t_total: f64,
    pub accuracy: f64,
    pub gain: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub n_agents: usize,
    /// mean accuracy of the dispatched group; 0 when uncovered
    pub accuracy: f64,
    /// W_k times the slowest member's latency; 0 when uncovered
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowMetrics {
    pub agents: Vec<Option<AgentMetrics>>,
    pub regions: Vec<RegionMetrics>,
}

impl WorkflowMetrics {
    /// `max_k Delta_k`.
    pub fn max_deviation(&self) -> f64 {
        self.regions
            .iter()
            .map(|r| r.deviation)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn deviations(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.deviation).collect()
    }
}

/// Evaluates every phase of one agent's workflow for a given group size.
pub fn agent_metrics(
    scenario: &ScenarioInstance,
    agent: usize,
    region: usize,
    n_k: usize,
    res: &AgentResources,
) -> Result<AgentMetrics, ModelError> {
    let a = &scenario.agents[agent];
    let r = &scenario.regions[region];
    let sys = &scenario.system;

    let d_ms = mobility_distance(a, r);
    let (t_ms, e_ms) = mobility_energy_delay(d_ms, res.v_ms, a.lambda1, a.lambda2)?;
    let accuracy = sensing_accuracy(res.t_s, n_k, sys)?;
    let e_s = a.p_sense * res.t_s;
    let (t_c, e_c) = compute_delay_energy(res.t_s, res.rho, res.f, a)?;
    let e_mt = exploration_energy(res.d_mt, res.t_mt, a);
    let t_p = t_c.max(res.t_mt);
    let gain = channel_gain(r, res.d_mt, sys);
    let rate = if res.b > 0.0 {
        uplink_rate(res.b, res.p, gain, sys.n0)?
    } else {
        0.0
    };
    let payload = res.rho * a.gamma * res.t_s;
    let (t_tr, e_tr) = if rate > 0.0 {
        let t = payload / rate;
        (t, res.p * t)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let e_tot = e_ms + e_s + e_c + e_mt + e_tr;
    Ok(AgentMetrics {
        region,
        d_ms,
        t_ms,
        t_sense: res.t_s,
        t_c,
        t_mt: res.t_mt,
        t_p,
        t_tr,
        e_ms,
        e_s,
        e_c,
        e_mt,
        e_tr,
        e_tot,
        t_total: t_ms + res.t_s + t_p + t_tr,
        accuracy,
        gain,
        rate,
    })
}

/// Full workflow evaluation; idle agents contribute nothing.
pub fn workflow_metrics(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
) -> Result<WorkflowMetrics, ModelError> {
    let k_count = scenario.n_regions();
    let counts = assignment.counts(k_count);
    let mut agents = vec![None; scenario.n_agents()];
    let mut regions = vec![
        RegionMetrics {
            n_agents: 0,
            accuracy: 0.0,
            deviation: 0.0,
        };
        k_count
    ];
    let mut slowest = vec![0.0f64; k_count];
    for (n, k) in assignment.dispatched() {
        let res = alloc
            .get(n)
            .ok_or(ModelError::MissingAllocation { agent: n })?;
        let m = agent_metrics(scenario, n, k, counts[k], res)?;
        regions[k].n_agents += 1;
        regions[k].accuracy += m.accuracy;
        slowest[k] = slowest[k].max(m.t_total);
        agents[n] = Some(m);
    }
    for (k, rm) in regions.iter_mut().enumerate() {
        if rm.n_agents > 0 {
            rm.accuracy /= rm.n_agents as f64;
            rm.deviation = scenario.regions[k].w_rate * slowest[k];
        }
    }
    Ok(WorkflowMetrics { agents, regions })
}

/// `J = max_k Delta_k`, reported only for allocations that satisfy every
/// constraint within the system tolerance.
pub fn objective_value(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
) -> Result<f64, ModelError> {
    let violations = check_feasibility(scenario, assignment, alloc, FEAS_REL_TOL);
    if !violations.is_empty() {
        return Err(ModelError::Infeasible(violations));
    }
    Ok(workflow_metrics(scenario, assignment, alloc)?.max_deviation())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Accuracy {
        region: usize,
        achieved: f64,
        required: f64,
    },
    Compression {
        agent: usize,
        rho: f64,
        floor: f64,
    },
    AssignmentTarget {
        agent: usize,
        target: usize,
    },
    MissingAllocation {
        agent: usize,
    },
    Coverage {
        region: usize,
    },
    Energy {
        agent: usize,
        used: f64,
        budget: f64,
    },
    Bandwidth {
        used: f64,
        total: f64,
    },
    Bound {
        agent: usize,
        variable: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    Evaluation {
        agent: usize,
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Accuracy {
                region,
                achieved,
                required,
            } => write!(
                f,
                "accuracy: region {region} reaches {achieved:.6} < threshold {required:.6}"
            ),
            Violation::Compression { agent, rho, floor } => {
                write!(
                    f,
                    "compression: agent {agent} rho {rho:.6} outside [{floor:.6}, 1]"
                )
            }
            Violation::AssignmentTarget { agent, target } => {
                write!(
                    f,
                    "assignment: agent {agent} targets unknown region {target}"
                )
            }
            Violation::MissingAllocation { agent } => {
                write!(f, "assignment: dispatched agent {agent} has no allocation")
            }
            Violation::Coverage { region } => write!(f, "coverage: region {region} has no agent"),
            Violation::Energy {
                agent,
                used,
                budget,
            } => {
                write!(
                    f,
                    "energy: agent {agent} uses {used:.6} J > budget {budget:.6} J"
                )
            }
            Violation::Bandwidth { used, total } => {
                write!(f, "bandwidth: {used:.6} Hz allocated > total {total:.6} Hz")
            }
            Violation::Bound {
                agent,
                variable,
                value,
                lo,
                hi,
            } => write!(
                f,
                "bounds: agent {agent} {variable} = {value:.6e} outside [{lo:.6e}, {hi:.6e}]"
            ),
            Violation::Evaluation { agent, message } => {
                write!(f, "evaluation: agent {agent}: {message}")
            }
        }
    }
}

/// Slack allowed when testing `lhs <= rhs`.
pub fn tolerance(rhs: f64, rel_tol: f64) -> f64 {
    (rel_tol * rhs.abs()).max(FEAS_ABS_TOL)
}

fn exceeds(lhs: f64, rhs: f64, rel_tol: f64) -> bool {
    !(lhs <= rhs + tolerance(rhs, rel_tol))
}

/// Lists every violated constraint of the joint problem: accuracy, compression
/// bounds, assignment structure, coverage, energy, bandwidth and box bounds.
pub fn check_feasibility(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    rel_tol: f64,
) -> Vec<Violation> {
    let k_count = scenario.n_regions();
    let mut out = Vec::new();
    for (n, t) in assignment.targets().iter().enumerate() {
        if let Some(k) = t {
            if *k >= k_count {
                out.push(Violation::AssignmentTarget {
                    agent: n,
                    target: *k,
                });
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    let counts = assignment.counts(k_count);
    for (k, c) in counts.iter().enumerate() {
        if *c == 0 {
            out.push(Violation::Coverage { region: k });
        }
    }

    let mut acc_sum = vec![0.0; k_count];
    let mut bandwidth = 0.0;
    for (n, k) in assignment.dispatched() {
        let Some(res) = alloc.get(n) else {
            out.push(Violation::MissingAllocation { agent: n });
            continue;
        };
        let a = &scenario.agents[n];
        let r = &scenario.regions[k];
        bandwidth += res.b;

        let mut bound = |name: &str, value: f64, lo: f64, hi: f64, ok: bool| {
            if !ok {
                out.push(Violation::Bound {
                    agent: n,
                    variable: name.to_string(),
                    value,
                    lo,
                    hi,
                });
            }
        };
        let d_ms = mobility_distance(a, r);
        if d_ms > 0.0 {
            bound(
                "v_ms",
                res.v_ms,
                0.0,
                a.v_max,
                res.v_ms > 0.0 && !exceeds(res.v_ms, a.v_max, rel_tol),
            );
        } else {
            bound("v_ms", res.v_ms, 0.0, 0.0, res.v_ms.abs() <= FEAS_ABS_TOL);
        }
        bound(
            "t_s",
            res.t_s,
            0.0,
            f64::INFINITY,
            res.t_s > 0.0 && res.t_s.is_finite(),
        );
        bound(
            "f",
            res.f,
            0.0,
            a.f_max,
            res.f > 0.0 && !exceeds(res.f, a.f_max, rel_tol),
        );
        bound(
            "d_mt",
            res.d_mt,
            0.0,
            f64::INFINITY,
            res.d_mt >= 0.0 && res.d_mt.is_finite(),
        );
        bound(
            "t_mt",
            res.t_mt,
            0.0,
            f64::INFINITY,
            res.t_mt >= 0.0 && res.t_mt.is_finite(),
        );
        bound(
            "v_mt",
            res.d_mt,
            0.0,
            a.v_max * res.t_mt,
            !exceeds(res.d_mt, a.v_max * res.t_mt, rel_tol),
        );
        bound(
            "b",
            res.b,
            0.0,
            f64::INFINITY,
            res.b >= 0.0 && res.b.is_finite(),
        );
        bound(
            "p",
            res.p,
            0.0,
            a.p_max,
            res.p >= 0.0 && !exceeds(res.p, a.p_max, rel_tol),
        );

        let floor = r.rho_floor(a);
        if res.rho > 1.0 + tolerance(1.0, rel_tol) || exceeds(floor, res.rho, rel_tol) {
            out.push(Violation::Compression {
                agent: n,
                rho: res.rho,
                floor,
            });
        }

        let sane = res.t_s > 0.0 && res.rho > 0.0 && res.f > 0.0 && (d_ms == 0.0 || res.v_ms > 0.0);
        if !sane {
            continue;
        }
        match agent_metrics(scenario, n, k, counts[k], res) {
            Ok(m) => {
                acc_sum[k] += m.accuracy;
                if exceeds(m.e_tot, a.e_max, rel_tol) {
                    out.push(Violation::Energy {
                        agent: n,
                        used: m.e_tot,
                        budget: a.e_max,
                    });
                }
            }
            Err(e) => out.push(Violation::Evaluation {
                agent: n,
                message: e.to_string(),
            }),
        }
    }

    for (k, c) in counts.iter().enumerate() {
        if *c == 0 {
            continue;
        }
        let achieved = acc_sum[k] / *c as f64;
        let required = scenario.regions[k].theta_th;
        if exceeds(required, achieved, rel_tol) {
            out.push(Violation::Accuracy {
                region: k,
                achieved,
                required,
            });
        }
    }

    if exceeds(bandwidth, scenario.system.b_tot, rel_tol) {
        out.push(Violation::Bandwidth {
            used: bandwidth,
            total: scenario.system.b_tot,
        });
    }
    out
}
