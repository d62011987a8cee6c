//! The canonical 23-state drone operating FSM and a reference twin built on
//! it. This is the machine bundled scenarios declare and the vocabulary the
//! physics checker knows state semantics for (braking states slow down, S22
//! speeds up, S20 holds separation, and so on).

use super::{
    DigitalTwin, DroneId, FsmSpec, FsmState, FsmTransition, PredictionModel, PredictionParams,
    StateCategory, StateId, StaticAttributes, DT_VERSION,
};
use crate::geom::Vec3;
use std::collections::BTreeSet;

use StateCategory::*;

const STATES: &[(&str, &str, StateCategory, &[&str])] = &[
    ("S1", "Accelerate to Start", Motion, &[]),
    ("S2", "Air Trajectory Planner Updates", Motion, &[]),
    ("S3", "Flight Navigation Updates", Perception, &[]),
    ("S4", "Decelerate to Stop", Braking, &[]),
    ("S5", "Object Detection", Perception, &[]),
    ("S6", "Contingency Plan", Motion, &[]),
    ("S7", "Lane Changing", LaneControl, &[]),
    ("S8", "Drone Signal Interface", Signaling, &[]),
    ("S9", "Speed Information", SpeedControl, &[]),
    ("S10", "Lane Keeping Information", LaneControl, &[]),
    ("S11", "Stop Information", Signaling, &[]),
    ("S12", "Right Turn", LaneControl, &[]),
    ("S13", "Left Turn", LaneControl, &[]),
    ("S14", "Level Changing", LaneControl, &[]),
    ("S15", "Environmental Issue", Environment, &["weather_separation"]),
    ("S16", "Brake", Braking, &[]),
    ("S17", "Light Brake", Braking, &[]),
    ("S18", "Strong Brake", Braking, &[]),
    ("S19", "Emergency Brake", Braking, &[]),
    ("S20", "Maintain the Distance", SpeedControl, &["min_separation"]),
    ("S21", "Speed Keeping", SpeedControl, &["max_speed"]),
    ("S22", "Accelerate the Speed", SpeedControl, &["max_speed"]),
    ("S23", "Decelerate the Speed", SpeedControl, &["max_speed"]),
];

const TRANSITIONS: &[(&str, &str, &str)] = &[
    // Boot and cruise.
    ("S1", "power_on", "S2"),
    ("S2", "moving_forward", "S3"),
    ("S3", "object_detected", "S5"),
    ("S3", "route_clear", "S8"),
    // Stop state: restart when cleared; mission end terminates here.
    ("S4", "cleared", "S1"),
    // Object handling.
    ("S5", "object_persists_long", "S4"),
    ("S5", "mission_end", "S4"),
    ("S5", "avoidance_possible", "S6"),
    ("S5", "object_still_present", "S7"),
    ("S6", "plan_followed", "S3"),
    ("S7", "normal_flow", "S3"),
    // Signal interface fan-out.
    ("S8", "speed_request", "S9"),
    ("S8", "lane_request", "S10"),
    ("S8", "stop_request", "S11"),
    ("S8", "data_needed", "S3"),
    // Speed information cluster.
    ("S9", "maintain_distance", "S20"),
    ("S9", "keep_speed", "S21"),
    ("S9", "accelerate", "S22"),
    ("S9", "decelerate", "S23"),
    ("S9", "return", "S8"),
    // Lane keeping cluster.
    ("S10", "turn_right", "S12"),
    ("S10", "turn_left", "S13"),
    ("S10", "change_level", "S14"),
    ("S10", "return", "S8"),
    // Stop information cluster.
    ("S11", "stop_advised", "S16"),
    ("S11", "environment_issue", "S15"),
    ("S11", "return", "S8"),
    ("S12", "turn_again", "S10"),
    ("S13", "turn_again", "S10"),
    ("S14", "direction_change", "S10"),
    ("S15", "issue_severe", "S11"),
    // Brake escalation levels.
    ("S16", "light", "S17"),
    ("S16", "strong", "S18"),
    ("S16", "emergency", "S19"),
    ("S16", "return", "S11"),
    ("S17", "obstacle", "S16"),
    ("S18", "stopped", "S16"),
    ("S19", "handled", "S16"),
    // Returns to the speed information state.
    ("S20", "separation_restored", "S9"),
    ("S21", "conflict", "S9"),
    ("S22", "conflict", "S9"),
    ("S23", "hazard_cleared", "S9"),
];

/// Build the canonical 23-state operating FSM (S1 through S23, initial S1,
/// terminal S4).
pub fn canonical_fsm() -> FsmSpec {
    let states = STATES
        .iter()
        .map(|(id, name, category, annotations)| FsmState {
            id: StateId::new(*id),
            name: (*name).to_string(),
            category: *category,
            safety_annotations: annotations.iter().map(|a| a.to_string()).collect(),
        })
        .collect();
    let transitions = TRANSITIONS
        .iter()
        .map(|(from, trigger, to)| FsmTransition {
            from: StateId::new(*from),
            to: StateId::new(*to),
            trigger: (*trigger).to_string(),
            guard: None,
        })
        .collect();
    let mut spec = FsmSpec {
        initial: StateId::new("S1"),
        terminal: BTreeSet::from([StateId::new("S4")]),
        states,
        transitions,
    };
    spec.normalize();
    spec
}

/// A reference twin for `drone_id`: canonical FSM, conservative static
/// attributes, a straight two-waypoint mission, constant-velocity prediction
/// broadcast every 5 ticks over a 10-tick horizon.
pub fn canonical_twin(drone_id: DroneId) -> DigitalTwin {
    DigitalTwin {
        dt_version: DT_VERSION,
        drone_id,
        attrs: StaticAttributes {
            weight_kg: 12.0,
            max_speed_mps: 15.0,
            comm_ratio: 1.0,
            license_ok: true,
            airworthiness_ok: true,
        },
        fsm: canonical_fsm(),
        mission: vec![Vec3::new(0.0, 0.0, 50.0), Vec3::new(1000.0, 0.0, 50.0)],
        prediction: PredictionParams {
            horizon_ticks: 10,
            model: PredictionModel::ConstantVelocity,
            broadcast_period_ticks: 5,
        },
    }
}
