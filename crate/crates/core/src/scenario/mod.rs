//! Seeded scenario generation and scenario-file ingestion.
//!
//! Random draws use ChaCha8 (`rand_chacha`) seeded with `seed_from_u64(seed)`.
//! Independent streams keep draws order-independent: stream 1 holds agent
//! positions, stream 2 region centers (with rejection resampling), stream 3
//! region attributes and stream 4 random initial matchings. A uniform draw on `[lo, hi)` is
//! `lo + (hi - lo) * (next_u64() >> 11) * 2^-53`.

use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    dbm_to_watts, reference_gain, AgentProfile, ModelError, Point, RegionProfile, ScenarioInstance,
    SystemProfile,
};

pub const AGENT_STREAM: u64 = 1;
pub const CENTER_STREAM: u64 = 2;
pub const REGION_STREAM: u64 = 3;
/// Stream of the random initial matchings used by the unstructured baselines.
pub const MATCHING_STREAM: u64 = 4;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("could not place {n_regions} regions of radius {radius} m with separation after {attempts} attempts")]
    Placement {
        n_regions: usize,
        radius: f64,
        attempts: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

/// Every generator constant; any field may be omitted from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_agents: usize,
    pub n_regions: usize,
    /// side of the square deployment area, m
    pub area_side: f64,
    /// Hz
    pub b_tot: f64,
    pub v_max: f64,
    pub p_max_dbm: f64,
    pub eta: f64,
    pub delta_pl: f64,
    pub beta0: f64,
    pub theta_coop: f64,
    pub e_max: f64,
    pub w_range: [f64; 2],
    pub theta_th_range: [f64; 2],
    pub q_range: [f64; 2],
    pub bs_height: f64,
    pub region_radius: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub p_sense: f64,
    pub gamma: f64,
    pub sigma_cap: f64,
    pub xi: f64,
    pub c0: f64,
    pub kappa: f64,
    pub rho_min: f64,
    /// exploration gain ceiling as a multiple of the reference channel gain
    pub omega_ratio: f64,
    pub zeta: f64,
    pub n0: f64,
    pub f_max: f64,
    pub a_safety: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_agents: 12,
            n_regions: 4,
            area_side: 200.0,
            b_tot: 10e6,
            v_max: 4.0,
            p_max_dbm: 30.0,
            eta: 50.0,
            delta_pl: 4.0,
            beta0: 1e-5,
            theta_coop: 0.9,
            e_max: 220.0,
            w_range: [0.5, 2.0],
            theta_th_range: [0.65, 0.78],
            q_range: [0.2, 0.8],
            bs_height: 20.0,
            region_radius: 15.0,
            lambda1: 1.0,
            lambda2: 0.5,
            p_sense: 2.0,
            gamma: 2e6,
            sigma_cap: 0.95,
            xi: 1.2,
            c0: 2.0,
            kappa: 1e-27,
            rho_min: 0.1,
            omega_ratio: 0.5,
            zeta: 10.0,
            n0: 1e-17,
            f_max: 1e9,
            a_safety: 0.8,
        }
    }
}

fn bad(name: &'static str, value: f64, reason: &'static str) -> ScenarioError {
    ScenarioError::Model(ModelError::InvalidParameter {
        name,
        value,
        reason,
    })
}

impl GeneratorConfig {
    /// Parameters accepted by [`GeneratorConfig::set_param`].
    pub const SWEEPABLE: [&'static str; 6] = [
        "b_tot",
        "theta_coop",
        "eta",
        "delta_pl",
        "e_max",
        "n_agents",
    ];

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_regions == 0 {
            return Err(bad("n_regions", 0.0, "must be at least 1"));
        }
        if self.n_agents < self.n_regions {
            return Err(bad(
                "n_agents",
                self.n_agents as f64,
                "must be at least n_regions",
            ));
        }
        for (name, value) in [
            ("area_side", self.area_side),
            ("b_tot", self.b_tot),
            ("v_max", self.v_max),
            ("eta", self.eta),
            ("delta_pl", self.delta_pl),
            ("beta0", self.beta0),
            ("e_max", self.e_max),
            ("bs_height", self.bs_height),
            ("region_radius", self.region_radius),
            ("lambda1", self.lambda1),
            ("gamma", self.gamma),
            ("sigma_cap", self.sigma_cap),
            ("xi", self.xi),
            ("kappa", self.kappa),
            ("rho_min", self.rho_min),
            ("n0", self.n0),
            ("f_max", self.f_max),
            ("a_safety", self.a_safety),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(bad(name, value, "must be positive and finite"));
            }
        }
        for (name, value) in [
            ("theta_coop", self.theta_coop),
            ("lambda2", self.lambda2),
            ("p_sense", self.p_sense),
            ("c0", self.c0),
            ("zeta", self.zeta),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(bad(name, value, "must be non-negative and finite"));
            }
        }
        for (name, range) in [
            ("w_range", self.w_range),
            ("theta_th_range", self.theta_th_range),
            ("q_range", self.q_range),
        ] {
            if !(range[0] < range[1]) {
                return Err(bad(name, range[0], "range must satisfy lo < hi"));
            }
        }
        if !(self.area_side > 2.0 * self.region_radius) {
            return Err(bad(
                "area_side",
                self.area_side,
                "must exceed the region diameter",
            ));
        }
        if !(self.omega_ratio >= 0.0) {
            return Err(bad("omega_ratio", self.omega_ratio, "must be non-negative"));
        }
        if !self.p_max_dbm.is_finite() {
            return Err(bad("p_max_dbm", self.p_max_dbm, "must be finite"));
        }
        Ok(())
    }

    /// Overrides one sweepable parameter by name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), ScenarioError> {
        match name {
            "b_tot" => self.b_tot = value,
            "theta_coop" => self.theta_coop = value,
            "eta" => self.eta = value,
            "delta_pl" => self.delta_pl = value,
            "e_max" => self.e_max = value,
            "n_agents" => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(bad("n_agents", value, "must be a non-negative integer"));
                }
                self.n_agents = value as usize
            }
            other => return Err(ScenarioError::UnknownParameter(other.to_string())),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GeneratorConfig, ScenarioError> {
        let text = read(path)?;
        let cfg: GeneratorConfig = toml::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn system(&self) -> SystemProfile {
        SystemProfile {
            bs_height: self.bs_height,
            beta0: self.beta0,
            delta_pl: self.delta_pl,
            n0: self.n0,
            b_tot: self.b_tot,
            sigma_cap: self.sigma_cap,
            xi: self.xi,
            c0: self.c0,
            theta_coop: self.theta_coop,
            a_safety: self.a_safety,
        }
    }
}

pub(crate) struct Uniform(ChaCha8Rng);

impl Uniform {
    pub(crate) fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Uniform(rng)
    }

    pub(crate) fn draw(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + (hi - lo) * u
    }
}

/// Builds a validated scenario; a pure function of `(config, seed)`.
///
/// The base station sits at the origin, the center of the area. Region disks
/// lie entirely inside the area and are pairwise at least `2 r` apart.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<ScenarioInstance, ScenarioError> {
    config.validate()?;
    let half = config.area_side / 2.0;
    let system = config.system();

    let mut rng = Uniform::new(seed, AGENT_STREAM);
    let agents = (0..config.n_agents)
        .map(|id| {
            let x = rng.draw(-half, half);
            let y = rng.draw(-half, half);
            AgentProfile {
                id,
                initial_position: Point(x, y),
                v_max: config.v_max,
                p_max: dbm_to_watts(config.p_max_dbm),
                f_max: config.f_max,
                e_max: config.e_max,
                gamma: config.gamma,
                eta: config.eta,
                rho_min: config.rho_min,
                p_sense: config.p_sense,
                kappa: config.kappa,
                lambda1: config.lambda1,
                lambda2: config.lambda2,
            }
        })
        .collect();

    let r = config.region_radius;
    let inner = half - r;
    let mut rng = Uniform::new(seed, CENTER_STREAM);
    let mut centers: Vec<Point> = Vec::with_capacity(config.n_regions);
    let mut attempts = 0;
    while centers.len() < config.n_regions {
        if attempts >= MAX_PLACEMENT_ATTEMPTS {
            return Err(ScenarioError::Placement {
                n_regions: config.n_regions,
                radius: r,
                attempts,
            });
        }
        attempts += 1;
        let c = Point(rng.draw(-inner, inner), rng.draw(-inner, inner));
        if centers.iter().all(|o| o.distance(&c) >= 2.0 * r) {
            centers.push(c);
        }
    }

    let mut rng = Uniform::new(seed, REGION_STREAM);
    let regions = centers
        .into_iter()
        .enumerate()
        .map(|(id, center)| {
            let w_rate = rng.draw(config.w_range[0], config.w_range[1]);
            let theta_th = rng.draw(config.theta_th_range[0], config.theta_th_range[1]);
            let q_prior = rng.draw(config.q_range[0], config.q_range[1]);
            let mut region = RegionProfile {
                id,
                center,
                radius: r,
                w_rate,
                theta_th,
                q_prior,
                omega: 0.0,
                zeta: config.zeta,
            };
            region.omega = config.omega_ratio * reference_gain(&region, &system);
            region
        })
        .collect();

    let scenario = ScenarioInstance {
        seed,
        system,
        agents,
        regions,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Canonical TOML text of a scenario.
pub fn to_toml(scenario: &ScenarioInstance) -> Result<String, ScenarioError> {
    toml::to_string(scenario).map_err(|e| ScenarioError::Serialize(e.to_string()))
}

pub fn from_toml(text: &str, path: &Path) -> Result<ScenarioInstance, ScenarioError> {
    let scenario: ScenarioInstance = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load(path: &Path) -> Result<ScenarioInstance, ScenarioError> {
    from_toml(&read(path)?, path)
}

pub fn save(scenario: &ScenarioInstance, path: &Path) -> Result<(), ScenarioError> {
    let text = to_toml(scenario)?;
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}
