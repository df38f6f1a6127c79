use super::InnerError;
use crate::model::{mobility_distance, AgentProfile, RegionProfile};

/// Fastest admissible move-to-sense speed over distance `d` when the other
/// phases consume `e_other` joules: `min(v_max, E_rms / (d lambda2))` with
/// `E_rms = E_max - e_other - d lambda1`, and 0 when `d = 0`.
pub fn ms_speed_for_distance(
    d: f64,
    agent: &AgentProfile,
    e_other: f64,
) -> Result<f64, InnerError> {
    if d <= 0.0 {
        return Ok(0.0);
    }
    let e_rms = agent.e_max - e_other - d * agent.lambda1;
    if !(e_rms > 0.0) {
        return Err(InnerError::Kinematics { agent: agent.id });
    }
    Ok(agent.v_max.min(e_rms / (d * agent.lambda2)))
}

pub fn optimal_ms_speed(
    agent: &AgentProfile,
    region: &RegionProfile,
    e_other: f64,
) -> Result<f64, InnerError> {
    ms_speed_for_distance(mobility_distance(agent, region), agent, e_other)
}

/// The half-maximum speed used by the fixed-speed baseline, provided the
/// energy budget can pay for it.
pub fn fixed_ms_speed(d: f64, agent: &AgentProfile, e_other: f64) -> Result<f64, InnerError> {
    if d <= 0.0 {
        return Ok(0.0);
    }
    let v = agent.v_max / 2.0;
    if d * (agent.lambda1 + agent.lambda2 * v) + e_other > agent.e_max {
        return Err(InnerError::Kinematics { agent: agent.id });
    }
    Ok(v)
}
