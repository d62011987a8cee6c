//! Digital twin documents: the behaviour a drone *declares* about itself.
//!
//! A twin bundles four things: static safety attributes (weight, speed
//! rating, certification flags), a finite state machine describing the
//! declared operating modes and the events that move between them, an
//! ordered mission route, and a trajectory-prediction contract (model,
//! horizon, broadcast period). Peers judge a drone by holding its telemetry
//! against this document, so the document itself must be unambiguous:
//! serialization is canonical (sorted keys, reproducible number formatting)
//! and byte-identical for equal twins.
//!
//! Identifiers are newtyped ([`DroneId`], [`StateId`]); event triggers are
//! free-form tokens because scenarios may extend the vocabulary, while
//! transition guards come from the closed [`GuardPredicate`] set so that a
//! checker can always evaluate them.

mod canonical;
mod fsm;
mod predict;

pub use canonical::{canonical_fsm, canonical_twin};
pub use fsm::{step_fsm, validate_fsm, FsmReport, FsmStepError, FsmViolation, GuardEnv};
pub use predict::{predict_trajectory, PredictError};

use crate::canonical_json;
use crate::geom::Vec3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Schema version accepted by this build.
pub const DT_VERSION: u32 = 1;

/// Unique drone identifier (stable across a whole swarm run).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DroneId(pub String);

impl DroneId {
    pub fn new(id: impl Into<String>) -> Self {
        DroneId(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DroneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// FSM state identifier token (for example `S20`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub String);

impl StateId {
    pub fn new(id: impl Into<String>) -> Self {
        StateId(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Broad behavioural family of a state, used by checkers to attach kinematic
/// expectations (for example, braking states must not speed up).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateCategory {
    Motion,
    Perception,
    Signaling,
    Braking,
    SpeedControl,
    LaneControl,
    Environment,
    Terminal,
}

/// Closed vocabulary of transition guards. Guards must be evaluable by any
/// observer from telemetry alone, which is why this is an enum rather than a
/// free-form expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardPredicate {
    SeparationLtMin,
    SpeedGtZero,
    SpeedGtMax,
    WeatherSevere,
    SignalInterference,
}

/// One declared operating mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmState {
    pub id: StateId,
    pub name: String,
    pub category: StateCategory,
    /// Safety rule identifiers (from the companion rule set) that this state
    /// claims to uphold; empty for states with no special obligations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub safety_annotations: Vec<String>,
}

/// One declared transition edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmTransition {
    pub from: StateId,
    pub to: StateId,
    /// Event token that fires the edge (open vocabulary, e.g. `power_on`).
    pub trigger: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardPredicate>,
}

/// A drone's declared finite state machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmSpec {
    pub initial: StateId,
    pub terminal: BTreeSet<StateId>,
    pub states: Vec<FsmState>,
    pub transitions: Vec<FsmTransition>,
}

impl FsmSpec {
    /// Sort states and transitions into canonical order. Serialization and
    /// deserialization both normalize, so equal machines compare equal and
    /// serialize to equal bytes regardless of author ordering.
    pub fn normalize(&mut self) {
        self.states.sort_by(|a, b| a.id.cmp(&b.id));
        for s in &mut self.states {
            s.safety_annotations.sort();
            s.safety_annotations.dedup();
        }
        self.transitions
            .sort_by(|a, b| (&a.from, &a.trigger, a.guard, &a.to).cmp(&(&b.from, &b.trigger, b.guard, &b.to)));
    }

    pub fn state(&self, id: &StateId) -> Option<&FsmState> {
        self.states.iter().find(|s| &s.id == id)
    }

    pub fn has_state(&self, id: &StateId) -> bool {
        self.state(id).is_some()
    }
}

/// Design-time safety attributes, declared once at twin exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticAttributes {
    pub weight_kg: f64,
    pub max_speed_mps: f64,
    /// Established communications divided by meeting opportunities, in [0, 1].
    pub comm_ratio: f64,
    pub license_ok: bool,
    pub airworthiness_ok: bool,
}

/// Trajectory prediction model named in the twin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionModel {
    #[serde(rename = "constant-velocity")]
    ConstantVelocity,
    #[serde(rename = "constant-acceleration")]
    ConstantAcceleration,
}

/// Contract for future-location broadcasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionParams {
    /// How many ticks ahead each broadcast covers; at least 1.
    pub horizon_ticks: u32,
    pub model: PredictionModel,
    /// Ticks between scheduled broadcasts; in [1, horizon_ticks].
    pub broadcast_period_ticks: u32,
}

/// The complete declared-behaviour document a drone hands to its peers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalTwin {
    pub dt_version: u32,
    pub drone_id: DroneId,
    pub attrs: StaticAttributes,
    pub fsm: FsmSpec,
    /// Ordered waypoints in metres.
    pub mission: Vec<Vec3>,
    pub prediction: PredictionParams,
}

impl DigitalTwin {
    pub fn normalize(&mut self) {
        self.fsm.normalize();
    }

    /// Structural checks beyond FSM shape: finite, in-range numbers and a
    /// usable prediction contract. Returns every problem found.
    pub fn validate(&self) -> Vec<TwinViolation> {
        let mut out = Vec::new();
        if self.dt_version != DT_VERSION {
            out.push(TwinViolation::UnsupportedVersion(self.dt_version));
        }
        let a = &self.attrs;
        for (name, v) in [
            ("attrs.weight_kg", a.weight_kg),
            ("attrs.max_speed_mps", a.max_speed_mps),
            ("attrs.comm_ratio", a.comm_ratio),
        ] {
            if !v.is_finite() {
                out.push(TwinViolation::NonFinite(name));
            }
        }
        if a.weight_kg <= 0.0 {
            out.push(TwinViolation::NonPositive("attrs.weight_kg"));
        }
        if a.max_speed_mps <= 0.0 {
            out.push(TwinViolation::NonPositive("attrs.max_speed_mps"));
        }
        if !(0.0..=1.0).contains(&a.comm_ratio) {
            out.push(TwinViolation::CommRatioOutOfRange(a.comm_ratio));
        }
        let p = &self.prediction;
        if p.horizon_ticks < 1 {
            out.push(TwinViolation::ZeroHorizon);
        }
        if p.broadcast_period_ticks < 1 || p.broadcast_period_ticks > p.horizon_ticks.max(1) {
            out.push(TwinViolation::BadBroadcastPeriod {
                period: p.broadcast_period_ticks,
                horizon: p.horizon_ticks,
            });
        }
        for w in &self.mission {
            if !(w.x.is_finite() && w.y.is_finite() && w.z.is_finite()) {
                out.push(TwinViolation::NonFinite("mission waypoint"));
                break;
            }
        }
        for v in validate_fsm(&self.fsm).violations {
            out.push(TwinViolation::Fsm(v));
        }
        out
    }
}

/// A problem with a twin document as a whole.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwinViolation {
    #[error("unsupported dt_version {0} (this build accepts {DT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("{0} is not a finite number")]
    NonFinite(&'static str),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("attrs.comm_ratio {0} outside [0, 1]")]
    CommRatioOutOfRange(f64),
    #[error("prediction.horizon_ticks must be at least 1")]
    ZeroHorizon,
    #[error("prediction.broadcast_period_ticks {period} outside [1, {horizon}]")]
    BadBroadcastPeriod { period: u32, horizon: u32 },
    #[error("fsm: {0}")]
    Fsm(FsmViolation),
}

/// Why a twin document could not be accepted.
#[derive(Debug, Error)]
pub enum TwinParseError {
    #[error("malformed twin document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid twin document:\n{}", format_violations(.0))]
    Invalid(Vec<TwinViolation>),
}

fn format_violations(violations: &[TwinViolation]) -> String {
    violations.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

/// Render a twin as canonical JSON. Equal twins yield identical bytes.
pub fn serialize_twin(twin: &DigitalTwin) -> String {
    let mut t = twin.clone();
    t.normalize();
    canonical_json::to_canonical_pretty(&t).expect("twin serializes to JSON")
}

/// Parse and fully validate a twin document. Malformed JSON (including
/// missing fields) reports the offending field; a well-formed document with
/// an invalid FSM or out-of-range numbers reports every violation.
pub fn deserialize_twin(text: &str) -> Result<DigitalTwin, TwinParseError> {
    let mut twin: DigitalTwin = serde_json::from_str(text)?;
    twin.normalize();
    let violations = twin.validate();
    if violations.is_empty() {
        Ok(twin)
    } else {
        Err(TwinParseError::Invalid(violations))
    }
}
