use std::f64::consts::LN_2;

use super::{groups, metrics_of, InnerError, InnerOptions};
use crate::convex_kit::{barrier_solve, SmoothConvexProgram, SolveStatus, Term};
use crate::model::{reference_gain, Assignment, ResourceAllocation, ScenarioInstance};

/// Transmission delay as a function of exploration distance, with fixed
/// bandwidth, power and payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayCurve {
    /// payload / bandwidth
    pub f: f64,
    /// p / (N0 b)
    pub a: f64,
    pub h_ref: f64,
    pub omega: f64,
    pub zeta: f64,
}

impl DelayCurve {
    /// `t_tr(d)` and its first two derivatives.
    pub fn eval(&self, d: f64) -> (f64, f64, f64) {
        let e = (-d / self.zeta).exp();
        let h = self.h_ref + self.omega * (1.0 - e);
        let h1 = self.omega / self.zeta * e;
        let h2 = -self.omega / (self.zeta * self.zeta) * e;
        let ah = 1.0 + self.a * h;
        let y = ah.ln() / LN_2;
        let y1 = self.a * h1 / (ah * LN_2);
        let y2 = (self.a * h2 * ah - self.a * self.a * h1 * h1) / (ah * ah * LN_2);
        let t = self.f / y;
        let t1 = -self.f * y1 / (y * y);
        let t2 = self.f * (2.0 * y1 * y1 / (y * y * y) - y2 / (y * y));
        (t, t1, t2)
    }
}

/// Optimizes each agent's exploration distance and duration together with
/// its processor speed, every other variable fixed. Computing and exploring
/// run in parallel, so the two are planned jointly; agents are independent,
/// so each minimizes its own latency.
pub fn block_control(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    opts: &InnerOptions,
) -> Result<ResourceAllocation, InnerError> {
    groups(scenario, assignment)?;
    let metrics = metrics_of(scenario, assignment, alloc)?;
    let mut out = alloc.clone();
    for (n, k) in assignment.dispatched() {
        let m = metrics[n].as_ref().expect("dispatched agent has metrics");
        let a = &scenario.agents[n];
        let r = &scenario.regions[k];
        let res = out.agents[n].as_mut().expect("dispatched");
        if r.omega <= 0.0 {
            res.d_mt = 0.0;
            res.t_mt = 0.0;
            continue;
        }
        let e_rc = a.e_max - (m.e_ms + m.e_s);
        if !(e_rc > m.e_c) {
            return Err(InnerError::Energy {
                agent: n,
                phase: "exploration",
            });
        }
        let curve = DelayCurve {
            f: res.rho * a.gamma * res.t_s / res.b,
            a: res.p / (scenario.system.n0 * res.b),
            h_ref: reference_gain(r, &scenario.system),
            omega: r.omega,
            zeta: r.zeta,
        };
        let spec = AgentControl {
            curve,
            p: res.p,
            cycles: a.gamma * a.eta * res.t_s * res.z(),
            kappa: a.kappa,
            f_max: a.f_max,
            e_rc,
            e_max: a.e_max,
            v_max: a.v_max,
            lambda1: a.lambda1,
            lambda2: a.lambda2,
        };
        let solved = if opts.fixed_speed {
            spec.solve_fixed_speed(res.t_mt, m.t_c, opts)
        } else {
            spec.solve(res.d_mt, res.t_mt, m.t_c, opts)
        };
        // no interior point: the current plan is the only feasible one
        let Some((d, t, t_c)) = solved else { continue };
        let (d, t) = if d > 1e-12 { (d, t) } else { (0.0, 0.0) };
        let t_c = if spec.cycles > 0.0 { t_c } else { m.t_c };
        if spec.energy(d, t, t_c) <= e_rc
            && spec.latency(d, t, t_c) <= spec.latency(res.d_mt, res.t_mt, m.t_c)
        {
            res.d_mt = d;
            res.t_mt = t;
            if spec.cycles > 0.0 {
                res.f = (spec.cycles / t_c).min(a.f_max);
            }
        }
    }
    Ok(out)
}

/// One agent's exploration and processor-speed subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentControl {
    pub curve: DelayCurve,
    pub p: f64,
    /// CPU cycles of the semantic extraction
    pub cycles: f64,
    pub kappa: f64,
    pub f_max: f64,
    /// energy left after move-to-sense and sensing
    pub e_rc: f64,
    pub e_max: f64,
    pub v_max: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl AgentControl {
    /// Parallel-phase plus transmission delay of a given plan.
    pub fn latency(&self, d: f64, t_mt: f64, t_c: f64) -> f64 {
        t_c.max(t_mt) + self.curve.eval(d).0
    }

    /// Exploration, computing and transmission energy of a given plan.
    pub fn energy(&self, d: f64, t_mt: f64, t_c: f64) -> f64 {
        let motion = if d > 0.0 {
            self.lambda1 * d + self.lambda2 * d * d / t_mt
        } else {
            0.0
        };
        motion + self.compute_energy(t_c) + self.p * self.curve.eval(d).0
    }

    fn compute_energy(&self, t_c: f64) -> f64 {
        if self.cycles > 0.0 {
            self.kappa * self.cycles.powi(3) / (t_c * t_c)
        } else {
            0.0
        }
    }

    fn compute_bounds(&self, prog: &mut SmoothConvexProgram, tc: usize) {
        if self.cycles > 0.0 {
            prog.set_bounds(tc, self.cycles / self.f_max, f64::INFINITY);
        } else {
            prog.set_bounds(tc, 0.0, 0.0);
        }
    }

    /// `kappa cycles^3 / t_c^2`, scaled by `s`.
    fn compute_term<'a>(&self, tc: usize, s: f64) -> Term<'a> {
        if !(self.cycles > 0.0) {
            return Term::constant(0.0);
        }
        let c = self.kappa * self.cycles.powi(3) * s;
        Term::func(vec![tc], move |x, g, h| {
            let t2 = x[0] * x[0];
            g[0] = -2.0 * c / (t2 * x[0]);
            h[0] = 6.0 * c / (t2 * t2);
            c / t2
        })
    }

    /// Minimizes `t_p + t_tr(d)` over `(d, t_mt, t_c, t_p)`; returns
    /// `(d, t_mt, t_c)`.
    pub fn solve(&self, d0: f64, t0: f64, c0: f64, opts: &InnerOptions) -> Option<(f64, f64, f64)> {
        let (d, t, tp, tc) = (0, 1, 2, 3);
        let mut prog = SmoothConvexProgram::new(4);
        prog.set_bounds(d, 0.0, f64::INFINITY);
        prog.set_bounds(t, 0.0, f64::INFINITY);
        prog.set_bounds(tp, 0.0, f64::INFINITY);
        self.compute_bounds(&mut prog, tc);
        let curve = self.curve;
        prog.add_objective(Term::linear(&[(tp, 1.0)], 0.0));
        prog.add_objective(Term::func(vec![d], move |x, g, h| {
            let (v, v1, v2) = curve.eval(x[0]);
            g[0] = v1;
            h[0] = v2;
            v
        }));
        prog.add_linear_constraint(&[(t, 1.0), (tp, -1.0)], 0.0);
        prog.add_linear_constraint(&[(tc, 1.0), (tp, -1.0)], 0.0);
        prog.add_linear_constraint(&[(d, 1.0), (t, -self.v_max)], 0.0);
        let s = 1.0 / self.e_max;
        let (l2, p) = (self.lambda2 * s, self.p * s);
        prog.add_constraint(vec![
            Term::linear(&[(d, self.lambda1 * s)], -self.e_rc * s),
            Term::func(vec![d, t], move |x, g, h| {
                let (dd, tt) = (x[0], x[1]);
                g[0] = 2.0 * l2 * dd / tt;
                g[1] = -l2 * dd * dd / (tt * tt);
                h[0] = 2.0 * l2 / tt;
                h[1] = -2.0 * l2 * dd / (tt * tt);
                h[2] = h[1];
                h[3] = 2.0 * l2 * dd * dd / (tt * tt * tt);
                l2 * dd * dd / tt
            }),
            Term::func(vec![d], move |x, g, h| {
                let (v, v1, v2) = curve.eval(x[0]);
                g[0] = p * v1;
                h[0] = p * v2;
                p * v
            }),
            self.compute_term(tc, s),
        ]);
        let x0 = [d0, t0, c0.max(t0), c0];
        let out = barrier_solve(&prog, &x0, &opts.barrier);
        (out.status != SolveStatus::Infeasible).then(|| (out.point[d], out.point[t], out.point[tc]))
    }

    /// Exploration at the pinned speed `v_max / 2`: `d = v_max t_mt / 2`.
    /// Returns `(d, t_mt, t_c)`.
    pub fn solve_fixed_speed(
        &self,
        t0: f64,
        c0: f64,
        opts: &InnerOptions,
    ) -> Option<(f64, f64, f64)> {
        let (t, tp, tc) = (0, 1, 2);
        let u = self.v_max / 2.0;
        let mut prog = SmoothConvexProgram::new(3);
        prog.set_bounds(t, 0.0, f64::INFINITY);
        prog.set_bounds(tp, 0.0, f64::INFINITY);
        self.compute_bounds(&mut prog, tc);
        let curve = self.curve;
        prog.add_objective(Term::linear(&[(tp, 1.0)], 0.0));
        prog.add_objective(Term::func(vec![t], move |x, g, h| {
            let (v, v1, v2) = curve.eval(u * x[0]);
            g[0] = u * v1;
            h[0] = u * u * v2;
            v
        }));
        prog.add_linear_constraint(&[(t, 1.0), (tp, -1.0)], 0.0);
        prog.add_linear_constraint(&[(tc, 1.0), (tp, -1.0)], 0.0);
        let s = 1.0 / self.e_max;
        let p = self.p * s;
        let motion = (self.lambda1 * u + self.lambda2 * u * u) * s;
        prog.add_constraint(vec![
            Term::linear(&[(t, motion)], -self.e_rc * s),
            Term::func(vec![t], move |x, g, h| {
                let (v, v1, v2) = curve.eval(u * x[0]);
                g[0] = p * u * v1;
                h[0] = p * u * u * v2;
                p * v
            }),
            self.compute_term(tc, s),
        ]);
        let x0 = [t0, c0.max(t0), c0];
        let out = barrier_solve(&prog, &x0, &opts.barrier);
        (out.status != SolveStatus::Infeasible)
            .then(|| (u * out.point[t], out.point[t], out.point[tc]))
    }
}
