mod common;

use common::{agent, region, rel, scenario, Draws};
use twinsync::inner_solver::{bcd_solve, InnerOptions};
use twinsync::matching::two_phase_init;
use twinsync::model::*;
use twinsync::scenario::{generate, GeneratorConfig};

fn random_resources(d: &mut Draws) -> AgentResources {
    AgentResources {
        v_ms: d.uniform(0.5, 4.0),
        t_s: d.uniform(1.0, 20.0),
        rho: d.uniform(0.1, 1.0),
        f: d.uniform(1e8, 1e9),
        d_mt: d.uniform(0.0, 20.0),
        t_mt: d.uniform(1.0, 20.0),
        b: d.uniform(1e5, 2e6),
        p: d.uniform(0.1, 1.0),
    }
}

fn random_covering(d: &mut Draws, n: usize, k: usize) -> Assignment {
    let mut targets: Vec<Option<usize>> = (0..n)
        .map(|_| {
            let c = d.index(k + 1);
            (c < k).then_some(c)
        })
        .collect();
    for (r, slot) in targets.iter_mut().take(k).enumerate() {
        *slot = Some(r);
    }
    Assignment::new(targets)
}

fn random_instance(seed: u64) -> (ScenarioInstance, Assignment, ResourceAllocation) {
    let s = generate(&GeneratorConfig::default(), seed).unwrap();
    let mut d = Draws::new(seed + 1000);
    let a = random_covering(&mut d, s.n_agents(), s.n_regions());
    let mut alloc = ResourceAllocation::empty(s.n_agents());
    for (n, _) in a.dispatched() {
        alloc.agents[n] = Some(random_resources(&mut d));
    }
    (s, a, alloc)
}

/// Independent straight-line evaluation of one agent's closed-loop latency
/// and energy.
fn reference_latency_energy(
    s: &ScenarioInstance,
    n: usize,
    k: usize,
    r: &AgentResources,
) -> (f64, f64) {
    let a = &s.agents[n];
    let g = &s.regions[k];
    let sys = &s.system;
    let dx = a.initial_position.0 - g.center.0;
    let dy = a.initial_position.1 - g.center.1;
    let d = ((dx * dx + dy * dy).sqrt() - g.radius).max(0.0);
    let (t_ms, e_ms) = if d > 0.0 {
        (d / r.v_ms, d * (a.lambda1 + a.lambda2 * r.v_ms))
    } else {
        (0.0, 0.0)
    };
    let e_s = a.p_sense * r.t_s;
    let work = a.gamma * r.t_s * a.eta * (1.0 / r.rho).ln();
    let t_c = work / r.f;
    let e_c = a.kappa * r.f * r.f * work;
    let e_mt = if r.d_mt > 0.0 {
        a.lambda1 * r.d_mt + a.lambda2 * r.d_mt * r.d_mt / r.t_mt
    } else {
        0.0
    };
    let c2 = g.center.0 * g.center.0 + g.center.1 * g.center.1;
    let h = sys.beta0 * (c2 + sys.bs_height * sys.bs_height).powf(-sys.delta_pl / 2.0)
        + g.omega * (1.0 - (-r.d_mt / g.zeta).exp());
    let rate = r.b * (1.0 + r.p * h / (sys.n0 * r.b)).log2();
    let t_tr = r.rho * a.gamma * r.t_s / rate;
    let e_tr = r.p * t_tr;
    (
        t_ms + r.t_s + t_c.max(r.t_mt) + t_tr,
        e_ms + e_s + e_c + e_mt + e_tr,
    )
}

fn reference_accuracy(t_s: f64, n_k: usize, sys: &SystemProfile) -> f64 {
    let x = (t_s * (n_k as f64).powf(sys.theta_coop)).log2();
    sys.sigma_cap / (1.0 + 2f64.powf(-sys.xi * (x - sys.c0)))
}

#[test]
fn workflow_matches_straight_line_recomputation() {
    for seed in 0..20 {
        let (s, a, alloc) = random_instance(seed);
        let m = workflow_metrics(&s, &a, &alloc).unwrap();
        let counts = a.counts(s.n_regions());
        let mut slowest = vec![0.0f64; s.n_regions()];
        for (n, k) in a.dispatched() {
            let r = alloc.get(n).unwrap();
            let (t, e) = reference_latency_energy(&s, n, k, r);
            let am = m.agents[n].unwrap();
            assert!(
                rel(am.t_total, t) < 1e-9,
                "seed {seed} agent {n}: {} vs {t}",
                am.t_total
            );
            assert!(
                rel(am.e_tot, e) < 1e-9,
                "seed {seed} agent {n}: {} vs {e}",
                am.e_tot
            );
            let q = reference_accuracy(r.t_s, counts[k], &s.system);
            assert!(rel(am.accuracy, q) < 1e-9);
            slowest[k] = slowest[k].max(t);
        }
        for k in 0..s.n_regions() {
            let want = s.regions[k].w_rate * slowest[k];
            assert!(rel(m.regions[k].deviation, want) < 1e-9);
        }
        for n in a.void_agents() {
            assert!(m.agents[n].is_none());
        }
    }
}

#[test]
fn parallel_phase_and_energy_sum_are_exact() {
    for seed in 0..10 {
        let (s, a, alloc) = random_instance(seed);
        let m = workflow_metrics(&s, &a, &alloc).unwrap();
        for am in m.agents.iter().flatten() {
            assert_eq!(am.t_p, am.t_c.max(am.t_mt));
            let sum = am.e_ms + am.e_s + am.e_c + am.e_mt + am.e_tr;
            assert!(rel(am.e_tot, sum) < 1e-9);
        }
    }
}

#[test]
fn single_agent_degenerate_phases_collapse() {
    let s = scenario(vec![agent(0, 0.0, 0.0)], vec![region(0, 5.0, 0.0)]);
    let a = Assignment::new(vec![Some(0)]);
    let r = AgentResources {
        v_ms: 0.0,
        t_s: 4.0,
        rho: 1.0,
        f: 1e9,
        d_mt: 0.0,
        t_mt: 0.0,
        b: 1e6,
        p: 1.0,
    };
    let alloc = ResourceAllocation {
        agents: vec![Some(r)],
    };
    let m = workflow_metrics(&s, &a, &alloc).unwrap();
    let am = m.agents[0].unwrap();
    assert_eq!(am.t_ms, 0.0);
    assert_eq!(am.t_p, 0.0);
    assert!(rel(am.t_total, 4.0 + am.t_tr) < 1e-12);
    assert!(rel(m.max_deviation(), am.t_total) < 1e-12);
}

#[test]
fn two_agents_in_one_region_use_the_slower() {
    let s = scenario(
        vec![agent(0, 0.0, 0.0), agent(1, 60.0, 0.0)],
        vec![region(0, 5.0, 0.0)],
    );
    let a = Assignment::new(vec![Some(0), Some(0)]);
    let base = AgentResources {
        v_ms: 2.0,
        t_s: 4.0,
        rho: 1.0,
        f: 1e9,
        d_mt: 0.0,
        t_mt: 0.0,
        b: 1e6,
        p: 1.0,
    };
    let alloc = ResourceAllocation {
        agents: vec![Some(base), Some(base)],
    };
    let m = workflow_metrics(&s, &a, &alloc).unwrap();
    let (t0, t1) = (m.agents[0].unwrap().t_total, m.agents[1].unwrap().t_total);
    assert!(t1 > t0);
    assert_eq!(m.regions[0].deviation, t1);
}

fn solved(seed: u64) -> (ScenarioInstance, Assignment, ResourceAllocation, f64) {
    let s = generate(&GeneratorConfig::default(), seed).unwrap();
    let a = two_phase_init(&s).unwrap();
    let sol = bcd_solve(&s, &a, None, &InnerOptions::default()).unwrap();
    (s, a, sol.allocation, sol.tau)
}

#[test]
fn objective_is_max_region_deviation_and_solver_output_is_feasible() {
    for seed in [0, 2, 3] {
        let (s, a, alloc, tau) = solved(seed);
        assert!(check_feasibility(&s, &a, &alloc, FEAS_REL_TOL).is_empty());
        let j = objective_value(&s, &a, &alloc).unwrap();
        let m = workflow_metrics(&s, &a, &alloc).unwrap();
        let brute = m.regions.iter().map(|r| r.deviation).fold(0.0, f64::max);
        assert_eq!(j, brute);
        assert_eq!(j, tau);
    }
}

#[test]
fn objective_scales_with_volatility() {
    let (s, a, alloc, _) = solved(0);
    let j = objective_value(&s, &a, &alloc).unwrap();
    for c in [0.5, 2.0, 3.7] {
        let mut t = s.clone();
        for r in &mut t.regions {
            r.w_rate *= c;
        }
        let jc = objective_value(&t, &a, &alloc).unwrap();
        assert!(rel(jc, c * j) < 1e-12);
    }
}

#[test]
fn single_region_objective_is_its_deviation() {
    let s = scenario(
        vec![agent(0, 0.0, 40.0), agent(1, 10.0, 50.0)],
        vec![region(0, 0.0, 60.0)],
    );
    let a = Assignment::new(vec![Some(0), Some(0)]);
    let sol = bcd_solve(&s, &a, None, &InnerOptions::default()).unwrap();
    let m = workflow_metrics(&s, &a, &sol.allocation).unwrap();
    assert_eq!(
        objective_value(&s, &a, &sol.allocation).unwrap(),
        m.regions[0].deviation
    );
}

#[test]
fn objective_is_invariant_under_agent_permutation() {
    let (s, a, alloc, _) = solved(0);
    let j = objective_value(&s, &a, &alloc).unwrap();
    let n = s.n_agents();
    let mut d = Draws::new(7);
    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, d.index(i + 1));
        }
        let mut t = s.clone();
        t.agents = perm
            .iter()
            .enumerate()
            .map(|(i, &p)| AgentProfile {
                id: i,
                ..s.agents[p].clone()
            })
            .collect();
        let pa = Assignment::new(perm.iter().map(|&p| a.target(p)).collect());
        let palloc = ResourceAllocation {
            agents: perm.iter().map(|&p| alloc.agents[p]).collect(),
        };
        let jp = objective_value(&t, &pa, &palloc).unwrap();
        assert!(rel(jp, j) < 1e-12);
    }
}

#[test]
fn infeasible_allocation_is_an_error_not_a_value() {
    let (s, a, mut alloc, _) = solved(0);
    let n = a.dispatched().next().unwrap().0;
    alloc.agents[n].as_mut().unwrap().b = s.system.b_tot;
    match objective_value(&s, &a, &alloc) {
        Err(ModelError::Infeasible(v)) => {
            assert!(v.iter().any(|v| matches!(v, Violation::Bandwidth { .. })))
        }
        other => panic!("expected an infeasibility report, got {other:?}"),
    }
}

#[test]
fn all_void_assignment_violates_every_coverage_constraint() {
    let s = generate(&GeneratorConfig::default(), 0).unwrap();
    let a = Assignment::all_void(s.n_agents());
    let v = check_feasibility(
        &s,
        &a,
        &ResourceAllocation::empty(s.n_agents()),
        FEAS_REL_TOL,
    );
    let covered: Vec<usize> = v
        .iter()
        .filter_map(|v| match v {
            Violation::Coverage { region } => Some(*region),
            _ => None,
        })
        .collect();
    assert_eq!(covered, (0..s.n_regions()).collect::<Vec<_>>());
}

#[test]
fn bandwidth_budget_boundary_is_feasible() {
    let (s, a, mut alloc, _) = solved(0);
    let used = alloc.total_bandwidth();
    let n = a.dispatched().next().unwrap().0;
    alloc.agents[n].as_mut().unwrap().b += s.system.b_tot - used;
    assert_eq!(alloc.total_bandwidth(), s.system.b_tot);
    let v = check_feasibility(&s, &a, &alloc, FEAS_REL_TOL);
    assert!(
        !v.iter().any(|v| matches!(v, Violation::Bandwidth { .. })),
        "{v:?}"
    );
}

#[test]
fn accuracy_is_increasing_in_time_and_group_size() {
    let sys = common::system();
    let mut d = Draws::new(1);
    for _ in 0..1000 {
        let t = d.log_uniform(0.01, 1e3);
        let t2 = t * d.uniform(1.001, 3.0);
        let n = 1 + d.index(10);
        assert!(sensing_accuracy(t, n, &sys).unwrap() < sensing_accuracy(t2, n, &sys).unwrap());
        assert!(sensing_accuracy(t, n, &sys).unwrap() < sensing_accuracy(t, n + 1, &sys).unwrap());
    }
    assert!(sensing_accuracy(0.0, 1, &sys).is_err());
}

#[test]
fn cooperation_shortens_the_required_sensing_time() {
    let sys = common::system();
    let mut d = Draws::new(2);
    for _ in 0..100 {
        let q = d.uniform(0.05, 0.94);
        let n = 1 + d.index(12);
        let t1 = sensing_time_for_accuracy(q, n, &sys).unwrap();
        let t2 = sensing_time_for_accuracy(q, n + 1, &sys).unwrap();
        assert!(t2 < t1);
    }
}

#[test]
fn inverse_accuracy_matches_a_bisection_oracle() {
    let sys = common::system();
    let mut d = Draws::new(3);
    for _ in 0..100 {
        let q = d.uniform(0.01, 0.949);
        let n = 1 + d.index(8);
        let (mut lo, mut hi) = (1e-12f64, 1e12f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if reference_accuracy(mid, n, &sys) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = sensing_time_for_accuracy(q, n, &sys).unwrap();
        assert!(rel(t, lo) < 1e-9, "{t} vs {lo}");
        assert!(rel(sensing_accuracy(t, n, &sys).unwrap(), q) < 1e-9);
    }
    assert!(sensing_time_for_accuracy(sys.sigma_cap, 1, &sys).is_err());
}

#[test]
fn gain_and_rate_are_monotone() {
    let sys = common::system();
    let mut d = Draws::new(4);
    for _ in 0..1000 {
        let mut r = region(0, d.uniform(-100.0, 100.0), d.uniform(-100.0, 100.0));
        r.omega = d.log_uniform(1e-12, 1e-8);
        r.zeta = d.uniform(1.0, 30.0);
        let x = d.uniform(0.0, 50.0);
        let dx = d.uniform(1e-6, 1.0);
        assert!(channel_gain(&r, x + dx, &sys) - channel_gain(&r, x, &sys) >= -1e-9);
        let (b, h) = (d.uniform(1e4, 1e7), d.log_uniform(1e-12, 1e-6));
        let p = d.uniform(0.0, 1.0);
        let rp = uplink_rate(b, p + dx, h, sys.n0).unwrap();
        assert!(rp - uplink_rate(b, p, h, sys.n0).unwrap() >= -1e-9);
    }
}
