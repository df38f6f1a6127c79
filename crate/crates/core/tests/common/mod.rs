#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinsync::model::{AgentProfile, Point, RegionProfile, ScenarioInstance, SystemProfile};

/// Seeded uniform draws for property tests.
pub struct Draws(ChaCha8Rng);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform(lo.ln(), hi.ln()).exp()
    }

    pub fn index(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
}

pub fn agent(id: usize, x: f64, y: f64) -> AgentProfile {
    AgentProfile {
        id,
        initial_position: Point(x, y),
        v_max: 4.0,
        p_max: 1.0,
        f_max: 1e9,
        e_max: 220.0,
        gamma: 2e6,
        eta: 50.0,
        rho_min: 0.1,
        p_sense: 2.0,
        kappa: 1e-27,
        lambda1: 1.0,
        lambda2: 0.5,
    }
}

pub fn region(id: usize, x: f64, y: f64) -> RegionProfile {
    RegionProfile {
        id,
        center: Point(x, y),
        radius: 15.0,
        w_rate: 1.0,
        theta_th: 0.7,
        q_prior: 0.5,
        omega: 0.0,
        zeta: 10.0,
    }
}

pub fn system() -> SystemProfile {
    SystemProfile {
        bs_height: 20.0,
        beta0: 1e-5,
        delta_pl: 4.0,
        n0: 1e-17,
        b_tot: 10e6,
        sigma_cap: 0.95,
        xi: 1.2,
        c0: 2.0,
        theta_coop: 0.9,
        a_safety: 0.8,
    }
}

pub fn scenario(agents: Vec<AgentProfile>, regions: Vec<RegionProfile>) -> ScenarioInstance {
    ScenarioInstance {
        seed: 0,
        system: system(),
        agents,
        regions,
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
