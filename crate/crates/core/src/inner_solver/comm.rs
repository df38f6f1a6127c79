use std::f64::consts::LN_2;

use super::{groups, metrics_of, InnerError};
use crate::convex_kit::{
    barrier_solve, golden_section, minmax_bisect, BarrierOptions, SmoothConvexProgram, SolveStatus,
    Term,
};
use crate::model::{uplink_rate, Assignment, ResourceAllocation, ScenarioInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct CommOutput {
    pub allocation: ResourceAllocation,
    /// deviation target reached by the block
    pub tau: f64,
}

/// Relative slack the bisection block leaves above its optimal target.
pub const COMM_SLACK: f64 = 1e-3;

/// Move-to-sense leg planned together with the radio: the cruising speed
/// trades travel time against the energy left for transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    /// move-to-sense distance, m
    pub d: f64,
    pub lambda2: f64,
    pub v_max: f64,
}

impl Motion {
    fn energy(&self, v: f64) -> f64 {
        self.d * self.lambda2 * v
    }
}

/// Bandwidth, power and (when the speed is free) cruising speed of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPlan {
    pub v: Option<f64>,
    pub b: f64,
    pub p: f64,
}

const SPEED_SCAN: usize = 16;

/// Minimizer of `f` over `(lo, hi]`: a uniform scan, then golden-section
/// search between the neighbours of the best scan point.
fn scan_minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    let h = (hi - lo) / SPEED_SCAN as f64;
    let (i, fi) =
        (1..=SPEED_SCAN)
            .map(|i| (i, f(lo + i as f64 * h)))
            .fold(
                (0, f64::INFINITY),
                |best, c| if c.1 < best.1 { c } else { best },
            );
    if !fi.is_finite() {
        return None;
    }
    let a = lo + (i - 1) as f64 * h;
    let b = (lo + (i + 1) as f64 * h).min(hi);
    let v = golden_section(&f, a, b, 1e-7 * hi);
    Some(if f(v) <= fi { v } else { lo + i as f64 * h })
}

/// Fixed link data of one dispatched agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub agent: usize,
    pub w: f64,
    /// delay of every phase but the upload, excluding the move-to-sense leg
    /// when `motion` is set
    pub t_non: f64,
    /// payload after compression, bits
    pub d_eff: f64,
    /// energy left for transmission, J, including the speed-dependent
    /// move energy when `motion` is set
    pub e_rt: f64,
    pub gain: f64,
    pub p_max: f64,
    pub n0: f64,
    pub motion: Option<Motion>,
}

impl Link {
    /// The same radio with energy `e_rt` and the speed frozen.
    pub fn with_energy(&self, e_rt: f64) -> Link {
        Link {
            e_rt,
            motion: None,
            ..*self
        }
    }

    /// Cheapest bandwidth plan meeting deviation `tau`, or `None` when no
    /// bandwidth suffices.
    pub fn plan(&self, tau: f64) -> Option<LinkPlan> {
        let Some(m) = self.motion else {
            let r = self.required_rate(tau)?;
            return Some(LinkPlan {
                v: None,
                b: self.min_bandwidth(r)?,
                p: self.power_for(r),
            });
        };
        let slack = tau / self.w - self.t_non;
        let v_hi = m.v_max.min(self.e_rt / (m.d * m.lambda2));
        if !(slack > 0.0) || !(m.d / slack < v_hi) {
            return None;
        }
        let radio = |v: f64| {
            let link = self.with_energy(self.e_rt - m.energy(v));
            let r = self.d_eff / (slack - m.d / v);
            (link, r)
        };
        let bandwidth = |v: f64| {
            let (link, r) = radio(v);
            if !(r > 0.0) || !(link.e_rt > 0.0) {
                return f64::INFINITY;
            }
            link.min_bandwidth(r).unwrap_or(f64::INFINITY)
        };
        let v = scan_minimize(bandwidth, m.d / slack, v_hi)?;
        let (link, r) = radio(v);
        Some(LinkPlan {
            v: Some(v),
            b: link.min_bandwidth(r)?,
            p: link.power_for(r),
        })
    }

    /// Power, and speed when it is free, minimizing the upload plus travel
    /// time at bandwidth `b`.
    pub fn best_split(&self, b: f64) -> Option<LinkPlan> {
        let Some(m) = self.motion else {
            return Some(LinkPlan {
                v: None,
                b,
                p: max_affordable_power(self, b)?,
            });
        };
        let v_hi = m.v_max.min(self.e_rt / (m.d * m.lambda2));
        let delay = |v: f64| {
            let link = self.with_energy(self.e_rt - m.energy(v));
            max_affordable_power(&link, b)
                .and_then(|p| uplink_rate(b, p, self.gain, self.n0).ok())
                .map_or(f64::INFINITY, |r| m.d / v + self.d_eff / r)
        };
        let v = scan_minimize(delay, 0.0, v_hi)?;
        Some(LinkPlan {
            v: Some(v),
            b,
            p: max_affordable_power(&self.with_energy(self.e_rt - m.energy(v)), b)?,
        })
    }

    /// Deviation of this link under `plan`.
    pub fn deviation(&self, plan: &LinkPlan) -> Option<f64> {
        let rate = uplink_rate(plan.b, plan.p, self.gain, self.n0).ok()?;
        let travel = match (self.motion, plan.v) {
            (Some(m), Some(v)) => m.d / v,
            _ => 0.0,
        };
        Some(self.w * (self.t_non + travel + self.d_eff / rate))
    }

    /// Transmit power for a required rate: the full budget, capped by energy.
    pub fn power_for(&self, r_req: f64) -> f64 {
        self.p_max.min(self.e_rt * r_req / self.d_eff)
    }

    /// Smallest bandwidth delivering `r_req` at [`Link::power_for`], or
    /// `None` when even unlimited bandwidth falls short.
    pub fn min_bandwidth(&self, r_req: f64) -> Option<f64> {
        if !(r_req > 0.0) || !(self.e_rt > 0.0) {
            return None;
        }
        let p = self.power_for(r_req);
        let snr_slope = p * self.gain / self.n0;
        if !(snr_slope / LN_2 > r_req) {
            return None;
        }
        // b log2(1 + S/b) = r  <=>  ln(1 + x) = c x  with  x = S/b, c = r ln2 / S.
        // The left side is concave, so Newton from the right of the positive
        // root decreases monotonically onto it.
        let c = r_req * LN_2 / snr_slope;
        let g = |x: f64| x.ln_1p() - c * x;
        let mut x = 2.0 / c;
        while g(x) >= 0.0 {
            x *= 2.0;
            if !x.is_finite() {
                return None;
            }
        }
        for _ in 0..100 {
            let step = g(x) / (1.0 / (1.0 + x) - c);
            let next = x - step;
            if !(next > 0.0) || !(next < x) {
                break;
            }
            x = next;
            if step <= 1e-15 * x {
                break;
            }
        }
        // x sits at or right of the root, so this bandwidth delivers r_req
        Some(snr_slope / x)
    }

    /// Rate needed to meet deviation `tau`, or `None` when the other phases
    /// alone already exceed it.
    pub fn required_rate(&self, tau: f64) -> Option<f64> {
        let slack = tau / self.w - self.t_non;
        (slack > 0.0).then(|| self.d_eff / slack)
    }

    /// Deviation with unlimited bandwidth and a zero-length upload.
    pub fn floor(&self) -> f64 {
        let travel = self.motion.map_or(0.0, |m| m.d / m.v_max);
        self.w * (self.t_non + travel)
    }
}

/// Link data of every dispatched agent under the current allocation. With
/// `free_speed` the move-to-sense speed of every travelling agent becomes
/// part of its link.
pub fn links(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    free_speed: bool,
) -> Result<Vec<Link>, InnerError> {
    groups(scenario, assignment)?;
    let metrics = metrics_of(scenario, assignment, alloc)?;
    let mut out = Vec::new();
    for (n, k) in assignment.dispatched() {
        let m = metrics[n].as_ref().expect("dispatched agent has metrics");
        let res = alloc.get(n).expect("dispatched agent has resources");
        let a = &scenario.agents[n];
        let e_rt = a.e_max - (m.e_ms + m.e_s + m.e_c + m.e_mt);
        if !(e_rt > 0.0) {
            return Err(InnerError::Energy {
                agent: n,
                phase: "transmission",
            });
        }
        let motion = (free_speed && m.d_ms > 0.0).then_some(Motion {
            d: m.d_ms,
            lambda2: a.lambda2,
            v_max: a.v_max,
        });
        let (t_non, e_rt) = match motion {
            Some(mo) => (m.t_sense + m.t_p, e_rt + mo.energy(res.v_ms)),
            None => (m.t_ms + m.t_sense + m.t_p, e_rt),
        };
        out.push(Link {
            agent: n,
            w: scenario.regions[k].w_rate,
            t_non,
            d_eff: res.rho * a.gamma * res.t_s,
            e_rt,
            gain: m.gain,
            p_max: a.p_max,
            n0: scenario.system.n0,
            motion,
        });
    }
    Ok(out)
}

fn total_bandwidth(links: &[Link], tau: f64) -> Option<f64> {
    let mut sum = 0.0;
    for l in links {
        sum += l.plan(tau)?.b;
    }
    Some(sum)
}

/// Minimizes the worst deviation over bandwidth and power by bisection on
/// the target `tau`. `tau_hint` is a deviation known to be attainable (the
/// current one); it is enlarged if numerical slack makes it fail. With
/// `free_speed` the move-to-sense speeds are re-planned too, so energy can
/// flow between travel and transmission.
pub fn block_comm(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    tau_hint: f64,
    free_speed: bool,
) -> Result<CommOutput, InnerError> {
    comm_bisection(
        scenario, assignment, alloc, tau_hint, free_speed, COMM_SLACK,
    )
}

/// [`block_comm`] aimed at the bisection optimum itself, without slack.
pub fn block_comm_exact(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    free_speed: bool,
) -> Result<CommOutput, InnerError> {
    comm_bisection(scenario, assignment, alloc, f64::INFINITY, free_speed, 0.0)
}

fn comm_bisection(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    tau_hint: f64,
    free_speed: bool,
    slack: f64,
) -> Result<CommOutput, InnerError> {
    let links = links(scenario, assignment, alloc, free_speed)?;
    let b_tot = scenario.system.b_tot;
    let feasible = |tau: f64| total_bandwidth(&links, tau).is_some_and(|s| s <= b_tot);
    let lo = links.iter().map(Link::floor).fold(0.0, f64::max);
    let mut hi = if tau_hint.is_finite() && tau_hint > lo {
        tau_hint
    } else {
        2.0 * lo.max(1e-9)
    };
    let mut grow = 0;
    while !feasible(hi) {
        hi = lo + 2.0 * (hi - lo);
        grow += 1;
        if grow > 60 {
            return Err(InnerError::Bandwidth);
        }
    }
    let tau_opt =
        minmax_bisect(&feasible, lo, hi, 1e-10 * hi).map_err(|_| InnerError::Bandwidth)?;
    // Aiming slightly above the optimum frees the bandwidth a saturated
    // bottleneck link would absorb for almost no gain, which leaves the
    // other blocks room to move.
    let relaxed = tau_opt * (1.0 + slack);
    let tau = if relaxed <= tau_hint {
        relaxed
    } else {
        tau_opt
    };

    let plans: Vec<LinkPlan> = links
        .iter()
        .map(|l| l.plan(tau).expect("feasible target"))
        .collect();
    let used: f64 = plans.iter().map(|x| x.b).sum();
    let scale = if used > 0.0 { b_tot / used } else { 1.0 };
    let mut out = alloc.clone();
    for (l, plan) in links.iter().zip(plans) {
        let res = out.agents[l.agent].as_mut().expect("dispatched");
        res.b = plan.b * scale;
        let radio = match (l.motion, plan.v) {
            (Some(m), Some(v)) => {
                res.v_ms = v;
                l.with_energy(l.e_rt - m.energy(v))
            }
            _ => *l,
        };
        // among the optimal powers keep the largest affordable one, so the
        // energy stays with the radio instead of leaking to the speed block
        res.p = max_affordable_power(&radio, res.b).map_or(plan.p, |q| q.max(plan.p));
    }
    Ok(CommOutput {
        allocation: out,
        tau,
    })
}

/// Bandwidth pinned at `B_tot / N` for all `N` agents; each agent transmits
/// at the largest power its energy budget allows, after splitting its energy
/// with the move-to-sense leg when `free_speed` is set.
pub fn block_comm_equal(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    free_speed: bool,
) -> Result<CommOutput, InnerError> {
    let links = links(scenario, assignment, alloc, free_speed)?;
    let b = scenario.system.b_tot / scenario.n_agents() as f64;
    let mut out = alloc.clone();
    let mut tau: f64 = 0.0;
    for l in &links {
        let no_energy = InnerError::Energy {
            agent: l.agent,
            phase: "transmission",
        };
        let plan = l.best_split(b).ok_or(no_energy.clone())?;
        tau = tau.max(l.deviation(&plan).ok_or(no_energy)?);
        let res = out.agents[l.agent].as_mut().expect("dispatched");
        res.b = b;
        res.p = plan.p;
        if let Some(v) = plan.v {
            res.v_ms = v;
        }
    }
    Ok(CommOutput {
        allocation: out,
        tau,
    })
}

/// Largest `p <= p_max` with `p D / R(b, p) <= E_rt`. Transmission energy
/// grows with power because the rate is concave in it.
pub fn max_affordable_power(link: &Link, b: f64) -> Option<f64> {
    let energy = |p: f64| {
        let r = b * (p * link.gain / (link.n0 * b)).ln_1p() / LN_2;
        p * link.d_eff / r
    };
    if energy(link.p_max) <= link.e_rt {
        return Some(link.p_max);
    }
    // p D / R(p) tends to D N0 b ln2 / (b h) as p -> 0
    let floor = link.d_eff * link.n0 * LN_2 / link.gain;
    if !(floor < link.e_rt) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, link.p_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if energy(mid) <= link.e_rt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

const HZ: f64 = 1e6;

/// Same problem as [`block_comm`] solved as one convex program over every
/// agent's bandwidth, power and rate (in MHz and Mbit/s). Kept for
/// cross-validation.
pub fn block_comm_joint(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    opts: &BarrierOptions,
) -> Result<CommOutput, InnerError> {
    let links = links(scenario, assignment, alloc, false)?;
    let n = links.len();
    let tau = 3 * n;
    let mut prog = SmoothConvexProgram::new(tau + 1);
    prog.add_objective(Term::linear(&[(tau, 1.0)], 0.0));
    let b_tot = scenario.system.b_tot / HZ;
    let mut x0 = vec![0.0; tau + 1];
    let mut tau0: f64 = 0.0;
    for (j, l) in links.iter().enumerate() {
        let (b, p, r) = (3 * j, 3 * j + 1, 3 * j + 2);
        let res = alloc.get(l.agent).expect("dispatched");
        prog.set_bounds(b, 0.0, b_tot);
        prog.set_bounds(p, 0.0, l.p_max);
        prog.set_bounds(r, 0.0, f64::INFINITY);
        let a = l.gain / (l.n0 * HZ);
        // r - b log2(1 + a p / b) <= 0
        prog.add_constraint(vec![
            Term::linear(&[(r, 1.0)], 0.0),
            Term::func(vec![b, p], move |x, g, h| {
                let (bb, pp) = (x[0], x[1]);
                let u = a * pp / bb;
                let l1 = u.ln_1p();
                let d = (1.0 + u) * (1.0 + u) * bb * LN_2;
                g[0] = -(l1 - u / (1.0 + u)) / LN_2;
                g[1] = -a / ((1.0 + u) * LN_2);
                h[0] = u * u / d;
                h[1] = -a * u / d;
                h[2] = h[1];
                h[3] = a * a / d;
                -bb * l1 / LN_2
            }),
        ]);
        // w (t_non + D / r) <= tau
        let (w, dd) = (l.w, l.d_eff / HZ);
        prog.add_constraint(vec![
            Term::linear(&[(tau, -1.0)], w * l.t_non),
            Term::func(vec![r], move |x, g, h| {
                g[0] = -w * dd / (x[0] * x[0]);
                h[0] = 2.0 * w * dd / (x[0] * x[0] * x[0]);
                w * dd / x[0]
            }),
        ]);
        // p <= E_rt r / D
        prog.add_linear_constraint(&[(p, 1.0), (r, -l.e_rt / dd)], 0.0);

        let rate = uplink_rate(res.b, res.p, l.gain, l.n0)? / HZ;
        x0[b] = res.b / HZ;
        x0[p] = res.p;
        x0[r] = rate;
        tau0 = tau0.max(w * (l.t_non + dd / rate));
    }
    let vars: Vec<(usize, f64)> = (0..n).map(|j| (3 * j, 1.0)).collect();
    prog.add_linear_constraint(&vars, b_tot);
    x0[tau] = tau0 * (1.0 + 1e-3);

    let outcome = barrier_solve(&prog, &x0, opts);
    if outcome.status == SolveStatus::Infeasible {
        return Err(InnerError::Bandwidth);
    }
    let mut out = alloc.clone();
    for (j, l) in links.iter().enumerate() {
        let res = out.agents[l.agent].as_mut().expect("dispatched");
        res.b = outcome.point[3 * j] * HZ;
        res.p = outcome.point[3 * j + 1];
    }
    Ok(CommOutput {
        allocation: out,
        tau: outcome.value,
    })
}
