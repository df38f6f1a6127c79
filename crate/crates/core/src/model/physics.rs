use std::f64::consts::LN_2;

use super::{invalid, AgentProfile, ModelError, RegionProfile, SystemProfile};

/// Travel distance from the agent's start to the boundary of the region,
/// clamped at zero when the agent already stands inside it.
pub fn mobility_distance(agent: &AgentProfile, region: &RegionProfile) -> f64 {
    (agent.initial_position.distance(&region.center) - region.radius).max(0.0)
}

/// Move-to-sense delay and energy at constant speed `v`:
/// `t = d / v`, `E = d (lambda1 + lambda2 v)`.
pub fn mobility_energy_delay(
    d: f64,
    v: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, f64), ModelError> {
    if d <= 0.0 {
        return Ok((0.0, 0.0));
    }
    if !(v > 0.0) {
        return Err(invalid("v", v, "speed must be > 0 when distance > 0"));
    }
    Ok((d / v, d * (lambda1 + lambda2 * v)))
}

/// Multiplicative sensing-time credit `N_k^theta` of a cooperating group.
pub fn cooperation_gain(n_k: usize, theta: f64) -> f64 {
    (n_k as f64).powf(theta)
}

fn sigmoid_exponent(t_s: f64, n_k: usize, system: &SystemProfile) -> f64 {
    let log_eff = t_s.log2() + system.theta_coop * (n_k as f64).log2();
    -system.xi * (log_eff - system.c0)
}

/// Equivalent sensing accuracy of one agent sensing for `t_s` seconds in a
/// group of `n_k` collaborators.
pub fn sensing_accuracy(t_s: f64, n_k: usize, system: &SystemProfile) -> Result<f64, ModelError> {
    if !(t_s > 0.0) {
        return Err(invalid("t_s", t_s, "sensing time must be > 0"));
    }
    if n_k == 0 {
        return Err(invalid("n_k", 0.0, "group must contain at least one agent"));
    }
    let a = sigmoid_exponent(t_s, n_k, system).exp2();
    Ok(system.sigma_cap / (1.0 + a))
}

/// Accuracy together with its first and second derivative in `t_s`.
pub fn sensing_accuracy_derivatives(
    t_s: f64,
    n_k: usize,
    system: &SystemProfile,
) -> (f64, f64, f64) {
    let a = sigmoid_exponent(t_s, n_k, system).exp2();
    let (s, xi) = (system.sigma_cap, system.xi);
    let one_a = 1.0 + a;
    let q = s / one_a;
    let d1 = s * xi * a / (t_s * one_a * one_a);
    let d2 = s * xi * a * ((xi - 1.0) * a - (xi + 1.0)) / (t_s * t_s * one_a * one_a * one_a);
    (q, d1, d2)
}

/// Sensing time at which an agent in a group of `n_k` reaches accuracy
/// `q_target` (closed-form inverse of [`sensing_accuracy`]).
pub fn sensing_time_for_accuracy(
    q_target: f64,
    n_k: usize,
    system: &SystemProfile,
) -> Result<f64, ModelError> {
    if !(q_target > 0.0) {
        return Err(invalid("q_target", q_target, "target accuracy must be > 0"));
    }
    if q_target >= system.sigma_cap {
        return Err(invalid(
            "q_target",
            q_target,
            "target accuracy at or above the sensing ceiling is unreachable",
        ));
    }
    if n_k == 0 {
        return Err(invalid("n_k", 0.0, "group must contain at least one agent"));
    }
    let ratio = system.sigma_cap / q_target - 1.0;
    let log_eff = system.c0 - ratio.log2() / system.xi;
    Ok((log_eff - system.theta_coop * (n_k as f64).log2()).exp2())
}

/// Semantic-extraction delay and energy:
/// `t_c = gamma t_s eta ln(1/rho) / f`, `E_c = kappa f^2 gamma t_s eta ln(1/rho)`.
pub fn compute_delay_energy(
    t_s: f64,
    rho: f64,
    f: f64,
    agent: &AgentProfile,
) -> Result<(f64, f64), ModelError> {
    if !(rho > 0.0) || rho > 1.0 {
        return Err(invalid("rho", rho, "compression ratio must lie in (0, 1]"));
    }
    if !(f > 0.0) {
        return Err(invalid("f", f, "compute frequency must be > 0"));
    }
    if t_s < 0.0 {
        return Err(invalid("t_s", t_s, "sensing time must be >= 0"));
    }
    let cycles = agent.gamma * t_s * agent.eta * (-rho.ln()).max(0.0);
    Ok((cycles / f, agent.kappa * f * f * cycles))
}

/// Exploration energy `lambda1 d + lambda2 d^2 / t_mt`.
pub fn exploration_energy(d_mt: f64, t_mt: f64, agent: &AgentProfile) -> f64 {
    if d_mt <= 0.0 {
        0.0
    } else if t_mt <= 0.0 {
        f64::INFINITY
    } else {
        agent.lambda1 * d_mt + agent.lambda2 * d_mt * d_mt / t_mt
    }
}

/// Expected spatial-diversity gain `omega (1 - exp(-d/zeta))`.
pub fn exploration_gain(d_mt: f64, region: &RegionProfile) -> f64 {
    region.omega * (-(-d_mt.max(0.0) / region.zeta).exp_m1())
}

/// Path-loss gain from the region center to the elevated base station.
pub fn reference_gain(region: &RegionProfile, system: &SystemProfile) -> f64 {
    let c = region.center.norm();
    system.beta0 * (c * c + system.bs_height * system.bs_height).powf(-system.delta_pl / 2.0)
}

pub fn channel_gain(region: &RegionProfile, d_mt: f64, system: &SystemProfile) -> f64 {
    reference_gain(region, system) + exploration_gain(d_mt, region)
}

/// Shannon rate `b log2(1 + p h / (N0 b))` in bits/s.
pub fn uplink_rate(b: f64, p: f64, h: f64, n0: f64) -> Result<f64, ModelError> {
    if !(b > 0.0) {
        return Err(invalid("b", b, "bandwidth must be > 0"));
    }
    if p < 0.0 {
        return Err(invalid("p", p, "power must be >= 0"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(b * (p * h / (n0 * b)).ln_1p() / LN_2)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;

    fn agent_at(x: f64, y: f64) -> AgentProfile {
        AgentProfile {
            id: 0,
            initial_position: Point(x, y),
            v_max: 4.0,
            p_max: 1.0,
            f_max: 1e9,
            e_max: 220.0,
            gamma: 1e6,
            eta: 50.0,
            rho_min: 0.1,
            p_sense: 2.0,
            kappa: 1e-26,
            lambda1: 1.0,
            lambda2: 0.5,
        }
    }

    fn region(cx: f64, cy: f64, r: f64) -> RegionProfile {
        RegionProfile {
            id: 0,
            center: Point(cx, cy),
            radius: r,
            w_rate: 1.0,
            theta_th: 0.7,
            q_prior: 0.5,
            omega: 2.0,
            zeta: 10.0,
        }
    }

    pub(crate) fn system() -> SystemProfile {
        SystemProfile {
            bs_height: 10.0,
            beta0: 1e-5,
            delta_pl: 4.0,
            n0: 1e-17,
            b_tot: 1e7,
            sigma_cap: 0.9,
            xi: 1.0,
            c0: 2.0,
            theta_coop: 0.9,
            a_safety: 0.8,
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            mobility_distance(&agent_at(0.0, 0.0), &region(30.0, 40.0, 10.0)),
            40.0
        );
        assert_eq!(
            mobility_distance(&agent_at(5.0, 0.0), &region(0.0, 0.0, 10.0)),
            0.0
        );
        assert_eq!(
            mobility_distance(&agent_at(10.0, 0.0), &region(0.0, 0.0, 10.0)),
            0.0
        );
    }

    #[test]
    fn mobility_examples() {
        assert_eq!(
            mobility_energy_delay(0.0, 123.0, 1.0, 1.0).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            mobility_energy_delay(0.0, 0.0, 1.0, 1.0).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            mobility_energy_delay(40.0, 2.0, 1.0, 0.5).unwrap(),
            (20.0, 80.0)
        );
        assert_eq!(
            mobility_energy_delay(10.0, 1.0, 0.0, 1.0).unwrap(),
            (10.0, 10.0)
        );
        assert!(mobility_energy_delay(10.0, 0.0, 1.0, 1.0).is_err());
        assert!(mobility_energy_delay(10.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sensing_examples() {
        let s = system();
        // midpoint: t_s * n^theta = 2^c0
        let q = sensing_accuracy(4.0, 1, &s).unwrap();
        assert!((q - s.sigma_cap / 2.0).abs() < 1e-15);
        let q = sensing_accuracy(8.0, 1, &s).unwrap();
        assert!((q - 0.6).abs() < 1e-12);
        assert!(sensing_accuracy(1e9, 1, &s).unwrap() > s.sigma_cap - 1e-6);
        assert!(sensing_accuracy(0.0, 1, &s).is_err());
        assert!(sensing_accuracy(-1.0, 1, &s).is_err());
    }

    #[test]
    fn inverse_examples() {
        let s = system();
        let t = sensing_time_for_accuracy(s.sigma_cap / 2.0, 1, &s).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        let t = sensing_time_for_accuracy(0.6, 1, &s).unwrap();
        assert!((t - 8.0).abs() < 1e-12);
        assert!(sensing_time_for_accuracy(0.9, 1, &s).is_err());
        assert!(sensing_time_for_accuracy(0.95, 1, &s).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = system();
        for &t in &[0.3, 1.0, 4.0, 17.0, 80.0] {
            for n in 1..4 {
                let (q, d1, d2) = sensing_accuracy_derivatives(t, n, &s);
                let h = 1e-4 * t;
                let qp = sensing_accuracy(t + h, n, &s).unwrap();
                let qm = sensing_accuracy(t - h, n, &s).unwrap();
                assert!((q - sensing_accuracy(t, n, &s).unwrap()).abs() < 1e-15);
                assert!((d1 - (qp - qm) / (2.0 * h)).abs() < 1e-6 * d1.abs().max(1e-3));
                let fd2 = (qp - 2.0 * q + qm) / (h * h);
                assert!(
                    (d2 - fd2).abs() < 1e-4 * d2.abs().max(1e-3),
                    "t={t} {d2} {fd2}"
                );
            }
        }
    }

    #[test]
    fn compute_examples() {
        let mut a = agent_at(0.0, 0.0);
        assert_eq!(compute_delay_energy(3.0, 1.0, 1e8, &a).unwrap(), (0.0, 0.0));
        a.gamma = 1e6;
        a.eta = 50.0;
        a.kappa = 1e-26;
        let (tc, ec) = compute_delay_energy(1.0, (-1.0f64).exp(), 1e8, &a).unwrap();
        assert!((tc - 0.5).abs() < 1e-12);
        let expected = 1e-26 * 1e16 * 5e7;
        assert!((ec - expected).abs() < 1e-12 * expected);
        assert!(compute_delay_energy(1.0, 0.0, 1e8, &a).is_err());
        assert!(compute_delay_energy(1.0, 0.5, 0.0, &a).is_err());
    }

    #[test]
    fn exploration_examples() {
        let r = region(0.0, 0.0, 5.0);
        assert_eq!(exploration_gain(0.0, &r), 0.0);
        assert!((exploration_gain(1e6, &r) - r.omega).abs() < 1e-12);
        let expected = r.omega * (1.0 - (-1.0f64).exp());
        assert!((exploration_gain(r.zeta, &r) - expected).abs() < 1e-12);
    }

    #[test]
    fn channel_examples() {
        let mut s = system();
        let mut r = region(0.0, 0.0, 5.0);
        r.omega = 0.0;
        s.bs_height = 1.0;
        assert!((channel_gain(&r, 0.0, &s) - 1e-5).abs() < 1e-20);
        s.bs_height = 10.0;
        assert!((channel_gain(&r, 0.0, &s) - 1e-9).abs() < 1e-24);
        let r = region(3.0, 4.0, 5.0);
        assert!(channel_gain(&r, 1.0, &s) <= channel_gain(&r, 2.0, &s));
    }

    #[test]
    fn rate_examples() {
        // p h / (N0 b) = 1
        let r = uplink_rate(1e6, 1.0, 1e-11, 1e-17).unwrap();
        assert!((r - 1e6).abs() < 1e-6);
        assert_eq!(uplink_rate(1e6, 0.0, 1e-11, 1e-17).unwrap(), 0.0);
        // SNR = 3
        let r = uplink_rate(1e6, 1.0, 3e-11, 1e-17).unwrap();
        assert!((r - 2e6).abs() < 1e-6);
        assert!(uplink_rate(0.0, 1.0, 1e-11, 1e-17).is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert_eq!(dbm_to_watts(30.0), 1.0);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-15);
    }
}
