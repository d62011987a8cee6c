//! Run-time compliance checking of observed telemetry against a drone's
//! declared behaviour document.
//!
//! A trace of telemetry records is scored along three independent
//! dimensions — declared-state conformance, physical-behaviour conformance,
//! and predicted-location conformance — and merged into a per-tick verdict
//! plus two scalar metrics:
//!
//! * **honesty**: conforming ticks over ticks that declared a state, and
//! * **openness**: how much of the trace declared a state at all, scaled by
//!   how reliably due trajectory broadcasts were actually sent.

mod checks;

pub use checks::{
    assess, check_physics_conformance, check_prediction_conformance, check_state_conformance,
    slice_stats, window_verdict, PhysicsTickOutcome, PhysicsViolationKind,
    PredictionTickOutcome, StateTickOutcome, WindowStats,
};

use crate::dt_model::{DroneId, StateId};
use crate::geom::Vec3;
use crate::safety::UcaType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use thiserror::Error;

/// Event token carried in telemetry while severe weather is active.
pub const EVENT_WEATHER_SEVERE: &str = "weather_severe";
/// Event token carried in telemetry while broadcast interference is active.
pub const EVENT_SIGNAL_INTERFERENCE: &str = "signal_interference";

/// One predicted future location from a trajectory broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedPoint {
    pub tick: u64,
    pub pos: Vec3,
}

/// One tick of observed telemetry for a single drone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub drone_id: DroneId,
    pub pos: Vec3,
    /// Velocity in metres per tick.
    pub vel: Vec3,
    /// The state the drone claims to occupy, if it declared one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_state: Option<StateId>,
    /// Trigger tokens observed or announced this tick.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub events: BTreeSet<String>,
    /// Future locations broadcast this tick, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broadcast_futures: Option<Vec<PredictedPoint>>,
}

impl TelemetryRecord {
    pub fn speed(&self) -> f64 {
        self.vel.norm()
    }

    pub fn weather_severe(&self) -> bool {
        self.events.contains(EVENT_WEATHER_SEVERE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace is for drone {expected} but record at tick {tick} names {found}")]
    MixedDroneIds { expected: DroneId, found: DroneId, tick: u64 },
    #[error("record ticks must strictly increase: {prev} is followed by {next}")]
    NonIncreasingTicks { prev: u64, next: u64 },
}

/// An ordered, single-drone telemetry trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    drone_id: DroneId,
    records: Vec<TelemetryRecord>,
}

impl Trace {
    /// Build a trace, enforcing a single drone id and strictly increasing
    /// ticks.
    pub fn new(drone_id: DroneId, records: Vec<TelemetryRecord>) -> Result<Self, TraceError> {
        for pair in records.windows(2) {
            if pair[1].tick <= pair[0].tick {
                return Err(TraceError::NonIncreasingTicks {
                    prev: pair[0].tick,
                    next: pair[1].tick,
                });
            }
        }
        if let Some(r) = records.iter().find(|r| r.drone_id != drone_id) {
            return Err(TraceError::MixedDroneIds {
                expected: drone_id,
                found: r.drone_id.clone(),
                tick: r.tick,
            });
        }
        Ok(Trace { drone_id, records })
    }

    pub fn drone_id(&self) -> &DroneId {
        &self.drone_id
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn first_tick(&self) -> Option<u64> {
        self.records.first().map(|r| r.tick)
    }
}

/// Per-tick compliance status, ordered from best to worst. Merging the
/// three check dimensions keeps the maximum.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TickStatus {
    Conforming,
    Undeclared,
    PredictionViolation,
    PhysicsViolation,
    StateViolation,
}

impl TickStatus {
    pub fn is_violation(self) -> bool {
        matches!(
            self,
            TickStatus::PredictionViolation
                | TickStatus::PhysicsViolation
                | TickStatus::StateViolation
        )
    }
}

/// The merged verdict for a single tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickVerdict {
    pub tick: u64,
    pub status: TickStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uca_type: Option<UcaType>,
    /// Safety rule implicated by the violation, when one applies
    /// (e.g. `min_separation`, `max_speed`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

/// The full assessment of one trace against one declared behaviour document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceVerdict {
    pub drone_id: DroneId,
    pub per_tick: Vec<TickVerdict>,
    /// Conforming ticks over declared ticks, in [0, 1].
    pub honesty: f64,
    /// Declared-tick fraction scaled by broadcast adherence, in [0, 1].
    pub openness: f64,
    /// Set when the trace never declared a state, which forces honesty to 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_declaration: bool,
    pub summary: BTreeMap<TickStatus, u64>,
}

impl ComplianceVerdict {
    pub fn count(&self, status: TickStatus) -> u64 {
        self.summary.get(&status).copied().unwrap_or(0)
    }

    pub fn violation_count(&self) -> u64 {
        self.per_tick.iter().filter(|t| t.status.is_violation()).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplianceError {
    #[error("behaviour document is for drone {twin} but the trace is for {trace}")]
    IdMismatch { twin: DroneId, trace: DroneId },
}

/// Tunable thresholds for compliance checking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplianceConfig {
    /// Speed (m/tick) at or below which a drone counts as stopped.
    pub stop_epsilon: f64,
    /// Tolerance (m/tick) for speed-trend comparisons between ticks.
    pub speed_epsilon: f64,
    /// Maximum distance (m) between a broadcast future location and the
    /// actual position before the prediction counts as broken.
    pub prediction_epsilon_m: f64,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        ComplianceConfig { stop_epsilon: 0.1, speed_epsilon: 0.1, prediction_epsilon_m: 5.0 }
    }
}
