//! Scenario data types and the closed-form physical model of the five-phase
//! update workflow (move-to-sense, cooperative sensing, compute-while-moving,
//! uplink transmission, twin deviation).
//!
//! Everything here is an immutable value or a pure function.

pub mod physics;
pub mod workflow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use physics::*;
pub use workflow::*;

/// Relative tolerance shared by every feasibility test in the system.
pub const FEAS_REL_TOL: f64 = 1e-6;
/// Absolute floor applied under [`FEAS_REL_TOL`].
pub const FEAS_ABS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("scenario invariant violated: {0}")]
    InvalidScenario(String),
    #[error("agent {agent} is dispatched but has no resource allocation")]
    MissingAllocation { agent: usize },
    #[error("allocation infeasible: {} violated constraint(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Infeasible(Vec<Violation>),
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> ModelError {
    ModelError::InvalidParameter {
        name,
        value,
        reason,
    }
}

/// Planar coordinate in meters. The base station sits above the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub f64, pub f64);

impl Point {
    pub fn norm(&self) -> f64 {
        self.0.hypot(self.1)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.0 - other.0).hypot(self.1 - other.1)
    }
}

/// Hardware and energy profile of one ground agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub id: usize,
    pub initial_position: Point,
    /// m/s
    pub v_max: f64,
    /// W
    pub p_max: f64,
    /// cycles/s
    pub f_max: f64,
    /// J
    pub e_max: f64,
    /// sensing sample rate, bits/s
    pub gamma: f64,
    /// compression complexity, cycles/bit
    pub eta: f64,
    pub rho_min: f64,
    /// sensing power, W
    pub p_sense: f64,
    /// effective switched capacitance
    pub kappa: f64,
    /// rolling-resistance coefficient, J/m
    pub lambda1: f64,
    /// motor-impedance coefficient, J·s/m²
    pub lambda2: f64,
}

/// A circular target region and its twin-side statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionProfile {
    pub id: usize,
    pub center: Point,
    pub radius: f64,
    /// physical volatility rate W_k
    pub w_rate: f64,
    /// accuracy threshold
    pub theta_th: f64,
    /// prior confidence of the twin
    pub q_prior: f64,
    /// exploration gain ceiling
    pub omega: f64,
    /// exploration length scale, m
    pub zeta: f64,
}

/// Radio, sensing-model and policy constants shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemProfile {
    /// base-station height, m
    pub bs_height: f64,
    /// channel gain at 1 m
    pub beta0: f64,
    pub delta_pl: f64,
    /// noise power spectral density, W/Hz
    pub n0: f64,
    /// Hz
    pub b_tot: f64,
    /// sensing accuracy ceiling
    pub sigma_cap: f64,
    /// sigmoid steepness
    pub xi: f64,
    /// sigmoid threshold (log2 seconds)
    pub c0: f64,
    /// cooperation exponent; 0 disables cooperative gain
    pub theta_coop: f64,
    /// energy safety factor used by candidate pruning
    pub a_safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioInstance {
    pub seed: u64,
    pub system: SystemProfile,
    pub agents: Vec<AgentProfile>,
    pub regions: Vec<RegionProfile>,
}

macro_rules! require {
    ($cond:expr, $name:expr, $value:expr, $reason:expr) => {
        if !($cond) {
            return Err(invalid($name, $value, $reason));
        }
    };
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        require!(self.v_max > 0.0, "v_max", self.v_max, "must be > 0");
        require!(self.p_max > 0.0, "p_max", self.p_max, "must be > 0");
        require!(self.f_max > 0.0, "f_max", self.f_max, "must be > 0");
        require!(self.e_max > 0.0, "e_max", self.e_max, "must be > 0");
        require!(self.gamma > 0.0, "gamma", self.gamma, "must be > 0");
        require!(self.eta > 0.0, "eta", self.eta, "must be > 0");
        require!(
            self.rho_min > 0.0 && self.rho_min < 1.0,
            "rho_min",
            self.rho_min,
            "must lie in (0, 1)"
        );
        require!(self.p_sense >= 0.0, "p_sense", self.p_sense, "must be >= 0");
        require!(self.kappa > 0.0, "kappa", self.kappa, "must be > 0");
        require!(self.lambda1 > 0.0, "lambda1", self.lambda1, "must be > 0");
        require!(self.lambda2 > 0.0, "lambda2", self.lambda2, "must be > 0");
        Ok(())
    }
}

impl RegionProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        require!(self.radius >= 0.0, "radius", self.radius, "must be >= 0");
        require!(self.w_rate > 0.0, "w_rate", self.w_rate, "must be > 0");
        require!(
            self.theta_th > 0.0 && self.theta_th < 1.0,
            "theta_th",
            self.theta_th,
            "must lie in (0, 1)"
        );
        require!(
            self.q_prior >= 0.0 && self.q_prior < 1.0,
            "q_prior",
            self.q_prior,
            "must lie in [0, 1)"
        );
        require!(self.omega >= 0.0, "omega", self.omega, "must be >= 0");
        require!(self.zeta > 0.0, "zeta", self.zeta, "must be > 0");
        Ok(())
    }

    /// Upper bound on `z = -ln rho` implied by the prior-driven compression floor.
    pub fn z_max(&self, agent: &AgentProfile) -> f64 {
        -(agent.rho_min * (1.0 - self.q_prior)).ln()
    }

    pub fn rho_floor(&self, agent: &AgentProfile) -> f64 {
        agent.rho_min * (1.0 - self.q_prior)
    }
}

impl SystemProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        require!(
            self.bs_height > 0.0,
            "bs_height",
            self.bs_height,
            "must be > 0"
        );
        require!(self.beta0 > 0.0, "beta0", self.beta0, "must be > 0");
        require!(
            self.delta_pl >= 2.0,
            "delta_pl",
            self.delta_pl,
            "must be >= 2"
        );
        require!(self.n0 > 0.0, "n0", self.n0, "must be > 0");
        require!(self.b_tot > 0.0, "b_tot", self.b_tot, "must be > 0");
        require!(
            self.sigma_cap > 0.0 && self.sigma_cap < 1.0,
            "sigma_cap",
            self.sigma_cap,
            "must lie in (0, 1)"
        );
        require!(self.xi > 0.0, "xi", self.xi, "must be > 0");
        require!(
            self.theta_coop > 0.0 && self.theta_coop < 1.0,
            "theta_coop",
            self.theta_coop,
            "must lie in (0, 1)"
        );
        require!(
            self.a_safety > 0.0 && self.a_safety < 1.0,
            "a_safety",
            self.a_safety,
            "must lie in (0, 1)"
        );
        Ok(())
    }
}

impl ScenarioInstance {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.agents.is_empty() {
            return Err(ModelError::InvalidScenario("no agents".into()));
        }
        if self.regions.is_empty() {
            return Err(ModelError::InvalidScenario("no regions".into()));
        }
        if self.agents.len() < self.regions.len() {
            return Err(ModelError::InvalidScenario(format!(
                "{} agents cannot cover {} regions",
                self.agents.len(),
                self.regions.len()
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.id != i {
                return Err(ModelError::InvalidScenario(format!(
                    "agent at position {i} has id {}",
                    a.id
                )));
            }
            a.validate()?;
        }
        for (k, r) in self.regions.iter().enumerate() {
            if r.id != k {
                return Err(ModelError::InvalidScenario(format!(
                    "region at position {k} has id {}",
                    r.id
                )));
            }
            r.validate()?;
        }
        self.system.validate()
    }

    /// Copy of this scenario with the cooperative sensing gain disabled
    /// (`g(N_k) = 1` for every region).
    pub fn without_cooperation(&self) -> ScenarioInstance {
        let mut s = self.clone();
        s.system.theta_coop = 0.0;
        s
    }

    pub fn move_distance(&self, agent: usize, region: usize) -> f64 {
        mobility_distance(&self.agents[agent], &self.regions[region])
    }
}

/// Matching state: each agent maps to one region or to the void (idle).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    targets: Vec<Option<usize>>,
}

impl Assignment {
    pub fn new(targets: Vec<Option<usize>>) -> Self {
        Self { targets }
    }

    pub fn all_void(n_agents: usize) -> Self {
        Self {
            targets: vec![None; n_agents],
        }
    }

    pub fn targets(&self) -> &[Option<usize>] {
        &self.targets
    }

    pub fn n_agents(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, agent: usize) -> Option<usize> {
        self.targets[agent]
    }

    pub fn set(&mut self, agent: usize, target: Option<usize>) {
        self.targets[agent] = target;
    }

    /// Agents dispatched to `region`, in index order.
    pub fn members(&self, region: usize) -> Vec<usize> {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(n, t)| (*t == Some(region)).then_some(n))
            .collect()
    }

    pub fn void_agents(&self) -> Vec<usize> {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(n, t)| t.is_none().then_some(n))
            .collect()
    }

    pub fn dispatched(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(n, t)| t.map(|k| (n, k)))
    }

    pub fn counts(&self, n_regions: usize) -> Vec<usize> {
        let mut c = vec![0; n_regions];
        for k in self.targets.iter().flatten() {
            if *k < n_regions {
                c[*k] += 1;
            }
        }
        c
    }

    pub fn covers(&self, n_regions: usize) -> bool {
        self.counts(n_regions).iter().all(|&c| c > 0)
    }

    /// Stable 64-bit digest of the target vector (FNV-1a), used to detect
    /// revisited matching states.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.targets {
            let code = t.map_or(0u64, |k| k as u64 + 1);
            for byte in code.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Continuous decision variables of one dispatched agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentResources {
    /// move-to-sense speed, m/s (0 when already inside the region)
    pub v_ms: f64,
    /// sensing duration, s
    pub t_s: f64,
    /// compression ratio in (0, 1]
    pub rho: f64,
    /// compute frequency, cycles/s
    pub f: f64,
    /// exploration distance, m
    pub d_mt: f64,
    /// exploration duration, s
    pub t_mt: f64,
    /// bandwidth, Hz
    pub b: f64,
    /// transmit power, W
    pub p: f64,
}

impl AgentResources {
    /// Exploration cruising speed `d_mt / t_mt` (0 when not exploring).
    pub fn v_mt(&self) -> f64 {
        if self.d_mt <= 0.0 || self.t_mt <= 0.0 {
            0.0
        } else {
            self.d_mt / self.t_mt
        }
    }

    /// `z = -ln rho`.
    pub fn z(&self) -> f64 {
        -self.rho.ln()
    }
}

/// Per-agent resources; `None` for idle (void) agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub agents: Vec<Option<AgentResources>>,
}

impl ResourceAllocation {
    pub fn empty(n_agents: usize) -> Self {
        Self {
            agents: vec![None; n_agents],
        }
    }

    pub fn get(&self, agent: usize) -> Option<&AgentResources> {
        self.agents.get(agent).and_then(|a| a.as_ref())
    }

    pub fn total_bandwidth(&self) -> f64 {
        self.agents.iter().flatten().map(|a| a.b).sum()
    }
}
