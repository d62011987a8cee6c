//! Future-location prediction, the content of periodic trajectory
//! broadcasts. Discrete per-tick integration in the same order the
//! simulation integrates motion: position advances with the current
//! velocity, then velocity updates.

use super::{DigitalTwin, PredictionModel};
use crate::geom::Vec3;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("cannot predict a trajectory for an empty mission")]
    EmptyMission,
}

/// Predict positions for ticks `now + 1 ..= now + horizon`.
///
/// Constant-velocity ignores `acc`; constant-acceleration integrates it with
/// two clamps: speed never exceeds the twin's `max_speed_mps`, and a
/// deceleration that would flip the direction of travel stops at zero
/// instead (drones brake, they do not fly backwards through a stop).
pub fn predict_trajectory(
    twin: &DigitalTwin,
    pos: Vec3,
    vel: Vec3,
    acc: Vec3,
    now_tick: u64,
) -> Result<Vec<(u64, Vec3)>, PredictError> {
    if twin.mission.is_empty() {
        return Err(PredictError::EmptyMission);
    }
    let max_speed = twin.attrs.max_speed_mps;
    let mut p = pos;
    let mut v = vel.clamp_norm(max_speed);
    let mut braked_to_stop = false;
    let mut out = Vec::with_capacity(twin.prediction.horizon_ticks as usize);
    for k in 1..=u64::from(twin.prediction.horizon_ticks) {
        p += v;
        out.push((now_tick + k, p));
        if twin.prediction.model == PredictionModel::ConstantAcceleration && !braked_to_stop {
            let next = v + acc;
            if v.norm() > 0.0 && next.dot(&v) < 0.0 {
                v = Vec3::ZERO;
                braked_to_stop = true;
            } else {
                v = next.clamp_norm(max_speed);
            }
        }
    }
    Ok(out)
}
