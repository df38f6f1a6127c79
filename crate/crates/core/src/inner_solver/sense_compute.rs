use super::{groups, metrics_of, AgentSca, InnerError, InnerOptions, ScaState, SCA_BOX};
use crate::convex_kit::{barrier_solve, SmoothConvexProgram, SolveStatus, Term};
use crate::model::{Assignment, ResourceAllocation, ScenarioInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct SenseComputeOutput {
    pub allocation: ResourceAllocation,
    /// optimal value of the convexified block, an upper bound on the true
    /// deviation of `allocation`
    pub surrogate_tau: f64,
}

const T_S: usize = 0;
const Z: usize = 1;
const ELL: usize = 2;
const T_C: usize = 3;
const T_P: usize = 4;
const T_MS: usize = 5;
const STRIDE: usize = 6;

/// Fixed quantities of one agent during the block.
struct Member {
    agent: usize,
    sca: AgentSca,
    w: f64,
    /// move-to-sense distance
    d_ms: f64,
    /// bounds on the move-to-sense time
    t_ms_range: (f64, f64),
    lambda2: f64,
    t_mt: f64,
    /// exploration energy plus the speed-independent travel energy
    e_fixed: f64,
    /// `gamma / R`
    varpi: f64,
    p: f64,
    z_max: f64,
    start: [f64; STRIDE],
}

/// Optimizes sensing time, compression, computation and move-to-sense time
/// of every dispatched agent with radio and exploration held fixed. Regions
/// are solved as independent programs, each minimizing its own deviation.
/// The travel time stays pinned under the fixed-speed restriction.
pub fn block_sense_compute(
    scenario: &ScenarioInstance,
    assignment: &Assignment,
    alloc: &ResourceAllocation,
    sca: &ScaState,
    opts: &InnerOptions,
) -> Result<SenseComputeOutput, InnerError> {
    let groups = groups(scenario, assignment)?;
    let metrics = metrics_of(scenario, assignment, alloc)?;
    let mut out = alloc.clone();
    let mut surrogate_tau = f64::NEG_INFINITY;

    for (k, group) in groups.iter().enumerate() {
        let region = &scenario.regions[k];
        let members: Vec<Member> = group
            .iter()
            .map(|&n| {
                let m = metrics[n].as_ref().expect("dispatched agent has metrics");
                let res = alloc.get(n).expect("dispatched agent has resources");
                let a = &scenario.agents[n];
                let sca = sca.agents[n].unwrap_or_else(|| {
                    AgentSca::new(res.t_s, res.z(), group.len(), &scenario.system)
                });
                let ell = a.gamma * a.eta * res.t_s * res.z() / a.f_max;
                let t_ms_range = if opts.fixed_speed || m.d_ms <= 0.0 {
                    (m.t_ms, m.t_ms)
                } else {
                    ((m.d_ms / a.v_max).max(m.t_ms / SCA_BOX), m.t_ms * SCA_BOX)
                };
                Member {
                    agent: n,
                    sca,
                    w: region.w_rate,
                    d_ms: m.d_ms,
                    t_ms_range,
                    lambda2: a.lambda2,
                    t_mt: m.t_mt,
                    e_fixed: m.e_mt + a.lambda1 * m.d_ms,
                    varpi: a.gamma / m.rate,
                    p: res.p,
                    z_max: if opts.compression {
                        region.z_max(a)
                    } else {
                        0.0
                    },
                    start: [res.t_s, res.z(), ell, m.t_c, m.t_p, m.t_ms],
                }
            })
            .collect();

        let (point, value) = match solve_region(scenario, k, &members, opts) {
            Ok(sol) => sol,
            Err(_) => {
                // no interior point: the region keeps its current plan
                let current = group
                    .iter()
                    .map(|&n| metrics[n].as_ref().map_or(f64::INFINITY, |m| m.t_total))
                    .fold(0.0, f64::max);
                surrogate_tau = surrogate_tau.max(region.w_rate * current);
                continue;
            }
        };
        surrogate_tau = surrogate_tau.max(value);
        for (j, mem) in members.iter().enumerate() {
            let a = &scenario.agents[mem.agent];
            let x = &point[STRIDE * j..STRIDE * (j + 1)];
            let res = out.agents[mem.agent].as_mut().expect("dispatched");
            res.t_s = x[T_S];
            let z = x[Z].clamp(0.0, mem.z_max);
            res.rho = (-z).exp();
            let cycles = a.gamma * a.eta * x[T_S] * z;
            res.f = if cycles > 0.0 && x[T_C] > 0.0 {
                (cycles / x[T_C]).min(a.f_max)
            } else {
                a.f_max
            };
            if mem.t_ms_range.0 < mem.t_ms_range.1 {
                res.v_ms = (mem.d_ms / x[T_MS]).min(a.v_max);
            }
        }
    }
    Ok(SenseComputeOutput {
        allocation: out,
        surrogate_tau,
    })
}

fn solve_region(
    scenario: &ScenarioInstance,
    k: usize,
    members: &[Member],
    opts: &InnerOptions,
) -> Result<(Vec<f64>, f64), InnerError> {
    let region = &scenario.regions[k];
    let nk = members.len();
    let tau = STRIDE * nk;
    let mut prog = SmoothConvexProgram::new(tau + 1);
    prog.add_objective(Term::linear(&[(tau, 1.0)], 0.0));
    let mut x0 = vec![0.0; tau + 1];
    let mut tau0: f64 = 0.0;

    for (j, mem) in members.iter().enumerate() {
        let a = &scenario.agents[mem.agent];
        let v = |off: usize| STRIDE * j + off;
        let s = mem.sca;
        let compute = mem.z_max > 0.0;

        prog.set_bounds(v(T_S), s.t_lo, s.t_hi);
        prog.set_bounds(v(Z), 0.0, mem.z_max);
        if compute {
            prog.set_bounds(v(ELL), 0.0, f64::INFINITY);
            prog.set_bounds(v(T_C), 0.0, f64::INFINITY);
        } else {
            prog.set_bounds(v(ELL), 0.0, 0.0);
            prog.set_bounds(v(T_C), 0.0, 0.0);
        }
        prog.set_bounds(v(T_P), mem.t_mt, f64::INFINITY);
        prog.set_bounds(v(T_MS), mem.t_ms_range.0, mem.t_ms_range.1);

        // deviation epigraph
        let c_tr = 0.5 * mem.w * mem.varpi;
        prog.add_constraint(vec![
            Term::linear(
                &[
                    (v(T_S), mem.w),
                    (v(T_P), mem.w),
                    (v(T_MS), mem.w),
                    (tau, -1.0),
                ],
                0.0,
            ),
            payload_term(v(T_S), v(Z), s.phi_coeff, c_tr),
        ]);
        prog.add_linear_constraint(&[(v(T_C), 1.0), (v(T_P), -1.0)], 0.0);

        let e_scale = 1.0 / a.e_max;
        let mut energy = vec![
            Term::linear(
                &[(v(T_S), a.p_sense * e_scale)],
                (mem.e_fixed - a.e_max) * e_scale,
            ),
            payload_term(v(T_S), v(Z), s.phi_coeff, 0.5 * mem.p * mem.varpi * e_scale),
        ];
        if mem.d_ms > 0.0 {
            energy.push(travel_term(
                v(T_MS),
                mem.lambda2 * mem.d_ms * mem.d_ms * e_scale,
            ));
        }
        if compute {
            let c_wl = a.gamma * a.eta / a.f_max;
            prog.add_constraint(vec![
                workload_term(v(T_S), v(Z), &s, c_wl),
                Term::linear(&[(v(ELL), -1.0)], 0.0),
            ]);
            prog.add_linear_constraint(&[(v(ELL), 1.0), (v(T_C), -1.0)], 0.0);
            let c_e = a.kappa * a.f_max.powi(3) * e_scale;
            energy.push(cube_over_square_term(v(ELL), v(T_C), c_e));
        }
        prog.add_constraint(energy);

        x0[v(T_S)] = mem.start[T_S];
        x0[v(Z)] = mem.start[Z];
        x0[v(ELL)] = mem.start[ELL];
        x0[v(T_C)] = mem.start[T_C];
        x0[v(T_P)] = mem.start[T_P];
        x0[v(T_MS)] = mem.start[T_MS];
        let tr = mem.varpi * s.payload_bound(mem.start[T_S], mem.start[Z]);
        tau0 = tau0.max(mem.w * (mem.start[T_MS] + mem.start[T_S] + mem.start[T_P] + tr));
    }

    let inv_n = 1.0 / nk as f64;
    let mut accuracy = vec![Term::constant(region.theta_th)];
    for (j, mem) in members.iter().enumerate() {
        let s = mem.sca;
        accuracy.push(Term::func(vec![STRIDE * j + T_S], move |x, g, h| {
            let (q, dq, d2q) = s.accuracy_surrogate_derivatives(x[0]);
            g[0] = -inv_n * dq;
            h[0] = -inv_n * d2q;
            -inv_n * q
        }));
    }
    prog.add_constraint(accuracy);
    x0[tau] = tau0 * (1.0 + 1e-6) + 1e-9;

    let outcome = barrier_solve(&prog, &x0, &opts.barrier);
    match outcome.status {
        SolveStatus::Infeasible => Err(InnerError::BlockInfeasible {
            block: "sense_compute",
            region: k,
        }),
        _ => Ok((outcome.point, outcome.value)),
    }
}

/// `c (t^2 / phi + phi exp(-2z))`.
fn payload_term<'a>(t: usize, z: usize, phi: f64, c: f64) -> Term<'a> {
    Term::func(vec![t, z], move |x, g, h| {
        let e = (-2.0 * x[1]).exp();
        g[0] = 2.0 * c * x[0] / phi;
        g[1] = -2.0 * c * phi * e;
        h[0] = 2.0 * c / phi;
        h[3] = 4.0 * c * phi * e;
        c * (x[0] * x[0] / phi + phi * e)
    })
}

/// `c / t`: travel energy `lambda2 d^2 / t_ms` up to scaling.
fn travel_term<'a>(t: usize, c: f64) -> Term<'a> {
    Term::func(vec![t], move |x, g, h| {
        g[0] = -c / (x[0] * x[0]);
        h[0] = 2.0 * c / (x[0] * x[0] * x[0]);
        c / x[0]
    })
}

/// `c * workload_bound(t, z)`.
fn workload_term<'a>(t: usize, z: usize, s: &AgentSca, c: f64) -> Term<'a> {
    match s.chi {
        Some(chi) => Term::func(vec![t, z], move |x, g, h| {
            g[0] = c * x[0] / chi;
            g[1] = c * chi * x[1];
            h[0] = c / chi;
            h[3] = c * chi;
            0.5 * c * (x[0] * x[0] / chi + chi * x[1] * x[1])
        }),
        None => Term::linear(&[(z, c * s.t_hi)], 0.0),
    }
}

/// `c x^3 / y^2`, jointly convex for `x >= 0`, `y > 0`.
fn cube_over_square_term<'a>(x_var: usize, y_var: usize, c: f64) -> Term<'a> {
    Term::func(vec![x_var, y_var], move |v, g, h| {
        let (x, y) = (v[0], v[1]);
        let (x2, y2) = (x * x, y * y);
        g[0] = 3.0 * c * x2 / y2;
        g[1] = -2.0 * c * x2 * x / (y2 * y);
        h[0] = 6.0 * c * x / y2;
        h[1] = -6.0 * c * x2 / (y2 * y);
        h[2] = h[1];
        h[3] = 6.0 * c * x2 * x / (y2 * y2);
        c * x2 * x / y2
    })
}
