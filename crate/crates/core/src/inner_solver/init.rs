use super::{
    fixed_ms_speed, groups, max_affordable_power, ms_speed_for_distance, true_tau, CommStrategy,
    InnerError, InnerOptions, Link, Motion,
};
use crate::model::{
    agent_metrics, channel_gain, compute_delay_energy, exploration_energy, mobility_distance,
    sensing_accuracy, sensing_time_for_accuracy, uplink_rate, AgentResources, Assignment,
    ResourceAllocation, ScenarioInstance,
};

/// Margin applied on top of the minimal sensing time at start-up.
pub const SENSING_MARGIN: f64 = 1.1;
const FRUGAL_MARGIN: f64 = 1.0 + 1e-4;
const FRUGAL_STEPS: usize = 64;
/// longest scanned exploration leg, in gain length scales
const FRUGAL_REACH: f64 = 5.0;
/// slowest processor speed of the frugal start, as a fraction of the maximum
const FRUGAL_MIN_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
struct Plan {
    t_s: f64,
    z: f64,
    f: f64,
    d_mt: f64,
    t_mt: f64,
}

/// Default starting point of the inner solver: sensing 10% above the
/// threshold time, mid-range compression (full when the payload is
/// otherwise unaffordable), full compute frequency, an even bandwidth split,
/// no exploration, and the energy slack split between cruising speed and
/// transmit power to minimize travel plus upload time. Agents that cannot
/// afford this get an energy-saving start instead.
pub fn initial_allocation(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    opts: &InnerOptions,
) -> Result<ResourceAllocation, InnerError> {
    let groups = groups(scenario, assignment)?;
    let dispatched = assignment.dispatched().count();
    let b = match opts.comm {
        CommStrategy::EqualBandwidth => scenario.system.b_tot / scenario.n_agents() as f64,
        _ => scenario.system.b_tot / dispatched as f64,
    };
    let mut alloc = ResourceAllocation::empty(scenario.n_agents());
    for (k, group) in groups.iter().enumerate() {
        let t_s = base_sensing_time(scenario, k, group.len())? * SENSING_MARGIN;
        for &n in group {
            alloc.agents[n] = Some(agent_start(scenario, n, k, t_s, b, opts)?);
        }
    }
    Ok(alloc)
}

fn base_sensing_time(
    scenario: &ScenarioInstance,
    region: usize,
    n_k: usize,
) -> Result<f64, InnerError> {
    let r = &scenario.regions[region];
    sensing_time_for_accuracy(r.theta_th, n_k, &scenario.system).map_err(|_| {
        InnerError::UnreachableAccuracy {
            region,
            threshold: r.theta_th,
            ceiling: scenario.system.sigma_cap,
        }
    })
}

fn agent_start(
    scenario: &ScenarioInstance,
    n: usize,
    k: usize,
    t_s: f64,
    b: f64,
    opts: &InnerOptions,
) -> Result<AgentResources, InnerError> {
    let a = &scenario.agents[n];
    let r = &scenario.regions[k];
    if !opts.compression {
        return agent_start_at(scenario, n, k, t_s, 0.0, b, opts);
    }
    // mid-range compression unless full compression is faster
    let z_max = r.z_max(a);
    let mid = agent_start_at(scenario, n, k, t_s, 0.5 * z_max, b, opts);
    let full = agent_start_at(scenario, n, k, t_s, z_max, b, opts);
    match (mid, full) {
        (Ok(m), Ok(f)) => {
            let latency = |res: &AgentResources| {
                agent_metrics(scenario, n, k, 1, res)
                    .map_or(f64::INFINITY, |m| m.t_ms + m.t_c.max(m.t_mt) + m.t_tr)
            };
            Ok(if latency(&f) < latency(&m) { f } else { m })
        }
        (Ok(m), Err(_)) => Ok(m),
        (Err(_), Ok(f)) => Ok(f),
        (Err(_), Err(e)) => frugal_start(scenario, n, k, t_s / SENSING_MARGIN, b, opts).ok_or(e),
    }
}

/// Energy-saving start for agents that cannot afford the default one:
/// sensing just above the threshold time, full compression, and an
/// exploration leg at half speed that raises the channel gain while the
/// processor runs slowly enough to finish within it. The leg length is
/// scanned for the lowest latency.
fn frugal_start(
    scenario: &ScenarioInstance,
    n: usize,
    k: usize,
    t_min: f64,
    b: f64,
    opts: &InnerOptions,
) -> Option<AgentResources> {
    let a = &scenario.agents[n];
    let r = &scenario.regions[k];
    let t_s = t_min * FRUGAL_MARGIN;
    let z = if opts.compression { r.z_max(a) } else { 0.0 };
    let cycles = a.gamma * t_s * a.eta * z;
    let u = 0.5 * a.v_max;
    (0..=FRUGAL_STEPS)
        .filter_map(|i| {
            let d_mt = if r.omega > 0.0 {
                FRUGAL_REACH * r.zeta * i as f64 / FRUGAL_STEPS as f64
            } else {
                0.0
            };
            let t_mt = d_mt / u;
            let f = if t_mt > 0.0 && cycles > 0.0 {
                (cycles / t_mt).clamp(FRUGAL_MIN_SPEED * a.f_max, a.f_max)
            } else {
                FRUGAL_MIN_SPEED * a.f_max
            };
            let plan = Plan {
                t_s,
                z,
                f,
                d_mt,
                t_mt,
            };
            let res = agent_plan(scenario, n, k, plan, b, opts).ok()?;
            let m = agent_metrics(scenario, n, k, 1, &res).ok()?;
            (m.e_tot <= a.e_max).then_some((m.t_total, res))
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, res)| res)
}

fn agent_start_at(
    scenario: &ScenarioInstance,
    n: usize,
    k: usize,
    t_s: f64,
    z: f64,
    b: f64,
    opts: &InnerOptions,
) -> Result<AgentResources, InnerError> {
    let f = scenario.agents[n].f_max;
    let plan = Plan {
        t_s,
        z,
        f,
        d_mt: 0.0,
        t_mt: 0.0,
    };
    agent_plan(scenario, n, k, plan, b, opts)
}

fn agent_plan(
    scenario: &ScenarioInstance,
    n: usize,
    k: usize,
    plan: Plan,
    b: f64,
    opts: &InnerOptions,
) -> Result<AgentResources, InnerError> {
    let a = &scenario.agents[n];
    let r = &scenario.regions[k];
    let Plan {
        t_s,
        z,
        f,
        d_mt,
        t_mt,
    } = plan;
    let rho = (-z).exp();
    let (_, e_c) = compute_delay_energy(t_s, rho, f, a)?;
    let e_mt = exploration_energy(d_mt, t_mt, a);
    let d = mobility_distance(a, r);
    let e_avail = a.e_max - a.p_sense * t_s - e_c - e_mt - d * a.lambda1;
    if !(e_avail > 0.0) {
        return Err(InnerError::Kinematics { agent: n });
    }
    let move_cost = d * a.lambda2;
    // with a free speed the radio and the cruise share the slack so that
    // travel plus upload time is smallest
    let motion = (d > 0.0 && !opts.fixed_speed).then_some(Motion {
        d,
        lambda2: a.lambda2,
        v_max: a.v_max,
    });
    let base = Link {
        agent: n,
        w: r.w_rate,
        t_non: 0.0,
        d_eff: rho * a.gamma * t_s,
        e_rt: e_avail,
        gain: channel_gain(r, d_mt, &scenario.system),
        p_max: a.p_max,
        n0: scenario.system.n0,
        motion,
    };
    let no_energy = InnerError::Energy {
        agent: n,
        phase: "transmission",
    };
    let v = match base.best_split(b).and_then(|plan| plan.v) {
        Some(v) => v,
        None if d > 0.0 && opts.fixed_speed => a.v_max / 2.0,
        None if d > 0.0 => return Err(no_energy),
        None => 0.0,
    };
    let l = base.with_energy(e_avail - move_cost * v);
    let p = max_affordable_power(&l, b).ok_or(no_energy)?;
    let e_tr = p * l.d_eff / uplink_rate(b, p, l.gain, l.n0)?;
    let e_other = a.p_sense * t_s + e_c + e_mt + e_tr;
    let v_ms = if opts.fixed_speed {
        fixed_ms_speed(d, a, e_other)?
    } else {
        ms_speed_for_distance(d, a, e_other)?
    };
    Ok(AgentResources {
        v_ms,
        t_s,
        rho,
        f,
        d_mt,
        t_mt,
        b,
        p,
    })
}

/// Adapts an allocation computed for a neighbouring topology: missing agents
/// get default values, bandwidth is rescaled to the budget, sensing times
/// are stretched until each region meets its accuracy threshold and speeds
/// are recomputed. Returns `None` when the result is still infeasible.
pub fn repair_warm_start(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    warm: &ResourceAllocation,
    opts: &InnerOptions,
) -> Option<ResourceAllocation> {
    let groups = groups(scenario, assignment).ok()?;
    if warm_fits(scenario, assignment, warm, opts) {
        return Some(warm.clone());
    }
    let dispatched = assignment.dispatched().count();
    let b_default = scenario.system.b_tot / dispatched as f64;
    let mut alloc = ResourceAllocation::empty(scenario.n_agents());
    for (k, group) in groups.iter().enumerate() {
        let r = &scenario.regions[k];
        let n_k = group.len();
        let t_default = base_sensing_time(scenario, k, n_k).ok()? * SENSING_MARGIN;
        for &n in group {
            let res = match warm.get(n) {
                Some(w) => {
                    let mut w = *w;
                    let floor = r.rho_floor(&scenario.agents[n]);
                    w.rho = w.rho.clamp(floor, 1.0);
                    w
                }
                None => agent_start(scenario, n, k, t_default, b_default, opts).ok()?,
            };
            alloc.agents[n] = Some(res);
        }
        let mean_q = |s: f64| -> Option<f64> {
            let mut sum = 0.0;
            for &n in group {
                let t = alloc.get(n)?.t_s * s;
                sum += sensing_accuracy(t, n_k, &scenario.system).ok()?;
            }
            Some(sum / n_k as f64)
        };
        if mean_q(1.0)? < r.theta_th {
            let mut hi = 2.0;
            while mean_q(hi)? < r.theta_th {
                hi *= 2.0;
                if hi > 1e6 {
                    return None;
                }
            }
            let mut lo = 1.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mean_q(mid)? >= r.theta_th {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            for &n in group {
                alloc.agents[n].as_mut()?.t_s *= hi;
            }
        }
    }
    let used = alloc.total_bandwidth();
    if opts.comm != CommStrategy::EqualBandwidth && used > 0.0 {
        let scale = scenario.system.b_tot / used;
        for res in alloc.agents.iter_mut().flatten() {
            res.b *= scale;
        }
    }
    let counts = assignment.counts(scenario.n_regions());
    for (n, k) in assignment.dispatched() {
        let res = alloc.agents[n]?;
        let mut probe = res;
        probe.v_ms = 1.0;
        let m = agent_metrics(scenario, n, k, counts[k], &probe).ok()?;
        let a = &scenario.agents[n];
        let e_other = m.e_s + m.e_c + m.e_mt + m.e_tr;
        let v = if opts.fixed_speed {
            fixed_ms_speed(m.d_ms, a, e_other).ok()?
        } else {
            ms_speed_for_distance(m.d_ms, a, e_other).ok()?
        };
        alloc.agents[n].as_mut()?.v_ms = v;
    }
    true_tau(scenario, assignment, &alloc)?;
    Some(alloc)
}

/// A warm allocation is reused verbatim when it is feasible for the topology
/// and respects the frozen variables of `opts`.
fn warm_fits(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    warm: &ResourceAllocation,
    opts: &InnerOptions,
) -> bool {
    let b_equal = scenario.system.b_tot / scenario.n_agents() as f64;
    let pinned = |x: f64, at: f64| x == 0.0 || (x - at).abs() <= 1e-12 * at;
    let frozen = assignment.dispatched().all(|(n, _)| {
        let Some(r) = warm.get(n) else { return false };
        let v_half = 0.5 * scenario.agents[n].v_max;
        (opts.compression || r.rho == 1.0)
            && (!opts.fixed_speed || (pinned(r.v_ms, v_half) && pinned(r.v_mt(), v_half)))
            && (opts.comm != CommStrategy::EqualBandwidth || r.b == b_equal)
    });
    frozen && true_tau(scenario, assignment, warm).is_some()
}
