use crate::model::{
    sensing_accuracy_derivatives, Assignment, ResourceAllocation, ScenarioInstance, SystemProfile,
};

/// Reference points below this are treated as zero compression, where the
/// AM-GM coefficient `t_s / z` degenerates.
pub const Z_REF_FLOOR: f64 = 1e-9;
/// Safety factor applied to the sampled curvature bound.
pub const CURVATURE_MARGIN: f64 = 1.5;
const CURVATURE_SAMPLES: usize = 4001;
/// Ratio between the reference sensing time and either end of the box the
/// expansion is valid on.
pub const SCA_BOX: f64 = 1.5;

/// Successive-convex-approximation data of one agent, expanded at
/// `(t_s_ref, z_ref)`. Valid for `t_s` in `[t_lo, t_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSca {
    pub t_s_ref: f64,
    pub z_ref: f64,
    /// `t_s_ref / z_ref`, or `None` when `z_ref` is below [`Z_REF_FLOOR`]
    pub chi: Option<f64>,
    /// `t_s_ref / exp(-z_ref)`
    pub phi_coeff: f64,
    /// curvature penalty of the accuracy minorant
    pub m: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    q_ref: f64,
    dq_ref: f64,
}

impl AgentSca {
    pub fn new(t_s_ref: f64, z_ref: f64, n_k: usize, system: &SystemProfile) -> Self {
        let t_lo = t_s_ref / SCA_BOX;
        let t_hi = t_s_ref * SCA_BOX;
        let (q_ref, dq_ref, _) = sensing_accuracy_derivatives(t_s_ref, n_k, system);
        AgentSca {
            t_s_ref,
            z_ref,
            chi: (z_ref >= Z_REF_FLOOR).then(|| t_s_ref / z_ref),
            phi_coeff: t_s_ref * z_ref.exp(),
            m: CURVATURE_MARGIN * curvature_bound(t_lo, t_hi, n_k, system),
            t_lo,
            t_hi,
            q_ref,
            dq_ref,
        }
    }

    /// Concave quadratic minorant of the sensing accuracy.
    pub fn accuracy_surrogate(&self, t: f64) -> f64 {
        let dt = t - self.t_s_ref;
        self.q_ref + self.dq_ref * dt - 0.5 * self.m * dt * dt
    }

    /// Value, slope and (constant) curvature of the minorant.
    pub fn accuracy_surrogate_derivatives(&self, t: f64) -> (f64, f64, f64) {
        let dt = t - self.t_s_ref;
        (
            self.accuracy_surrogate(t),
            self.dq_ref - self.m * dt,
            -self.m,
        )
    }

    /// Convex majorant of the bilinear `t_s z`.
    pub fn workload_bound(&self, t: f64, z: f64) -> f64 {
        match self.chi {
            Some(chi) => 0.5 * (t * t / chi + chi * z * z),
            None => self.t_hi * z,
        }
    }

    /// Convex majorant of `t_s exp(-z)`; multiply by `gamma / R` for the
    /// transmission delay.
    pub fn payload_bound(&self, t: f64, z: f64) -> f64 {
        0.5 * (t * t / self.phi_coeff + self.phi_coeff * (-2.0 * z).exp())
    }
}

/// Largest `|q''|` over `[lo, hi]`, from a dense log-spaced sample.
pub fn curvature_bound(lo: f64, hi: f64, n_k: usize, system: &SystemProfile) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    (0..CURVATURE_SAMPLES)
        .map(|i| {
            let t = (a + (b - a) * i as f64 / (CURVATURE_SAMPLES - 1) as f64).exp();
            sensing_accuracy_derivatives(t, n_k, system).2.abs()
        })
        .fold(0.0, f64::max)
}

/// Per-agent SCA state, indexed by agent; idle agents carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub agents: Vec<Option<AgentSca>>,
}

impl ScaState {
    /// Expands every dispatched agent at its current sensing time and
    /// compression.
    pub fn from_allocation(
        scenario: &ScenarioInstance,
        assignment: &Assignment,
        alloc: &ResourceAllocation,
    ) -> Self {
        let counts = assignment.counts(scenario.n_regions());
        let mut agents = vec![None; scenario.n_agents()];
        for (n, k) in assignment.dispatched() {
            if let Some(res) = alloc.get(n) {
                agents[n] = Some(AgentSca::new(res.t_s, res.z(), counts[k], &scenario.system));
            }
        }
        ScaState { agents }
    }
}
