//! Scenario files: swarm composition, scripted events, and run parameters.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compliance::ComplianceConfig;
use crate::dt_model::{DroneId, StateId};
use crate::geom::Vec3;
use crate::safety::{compile_ruleset, SafetyRuleSet};
use crate::trust::TrustConfig;

use super::SimError;

/// One scripted departure from honest behaviour, active on an inclusive
/// tick range. `to_tick: None` keeps the override active until the run ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationWindow {
    pub from_tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_tick: Option<u64>,
    #[serde(flatten)]
    pub kind: DeviationKind,
}

impl DeviationWindow {
    pub fn active_at(&self, tick: u64) -> bool {
        tick >= self.from_tick && self.to_tick.map_or(true, |end| tick <= end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationKind {
    /// Declare `state` in telemetry regardless of what the autopilot does.
    WrongState { state: StateId },
    /// Fly at `speed_mps` along the current heading, ignoring the declared
    /// speed ceiling and acceleration limits.
    SpeedBurst { speed_mps: f64 },
    /// Skip the separation-yield protocol and ignore dispatched recovery
    /// plans; hold course and cruise speed regardless of nearby traffic.
    IgnoreSeparation,
    /// Declare nothing: no state, no future-location broadcasts, no
    /// reputation reports. If active at tick 0 the drone also refuses the
    /// initial twin exchange.
    Silent,
    /// Broadcast future locations displaced by `offset_m` metres from the
    /// honestly predicted path.
    FalsePrediction { offset_m: f64 },
}

impl DeviationKind {
    fn label(&self) -> &'static str {
        match self {
            DeviationKind::WrongState { .. } => "wrong_state",
            DeviationKind::SpeedBurst { .. } => "speed_burst",
            DeviationKind::IgnoreSeparation => "ignore_separation",
            DeviationKind::Silent => "silent",
            DeviationKind::FalsePrediction { .. } => "false_prediction",
        }
    }
}

/// Scripted world events. Tick ranges are inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioEvent {
    /// An obstacle appears in front of one drone for a single tick.
    Object { at_tick: u64, drone_id: DroneId },
    /// Severe weather over the whole area; honest drones run the stop
    /// protocol and separation requirements widen.
    WeatherSevere { from_tick: u64, to_tick: u64 },
    /// Radio interference; reputation reports and violation reports sent
    /// during the interval are lost.
    SignalInterference { from_tick: u64, to_tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneConfig {
    pub id: DroneId,
    pub start_pos: Vec3,
    /// Speed the autopilot holds while cruising between waypoints (m/tick).
    pub cruise_speed_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_ratio: Option<f64>,
    /// Waypoints; defaults to a long straight line from the start position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_vel: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deviation: Vec<DeviationWindow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    #[serde(default)]
    pub enabled: bool,
}

fn default_eval_window() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub ticks: u64,
    #[serde(default = "default_eval_window")]
    pub eval_window_ticks: u64,
    /// Path to a safety-rules catalog, resolved relative to the scenario
    /// file. Omitted: the bundled default catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_catalog: Option<PathBuf>,
    #[serde(default)]
    pub orchestrator: OrchestratorConfig,
    #[serde(default)]
    pub trust: TrustConfig,
    #[serde(default)]
    pub compliance: ComplianceConfig,
    /// Probability that any single broadcast message is lost in transit.
    #[serde(default)]
    pub drop_probability: f64,
    pub drones: Vec<DroneConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioProblem {
    #[error("scenario needs at least one drone")]
    NoDrones,
    #[error("duplicate drone id {0}")]
    DuplicateDroneId(DroneId),
    #[error("drone {id}: {field} must be a finite number > 0, got {value}")]
    NonPositive {
        id: DroneId,
        field: &'static str,
        value: f64,
    },
    #[error("drone {id}: cruise speed {cruise} exceeds its speed ceiling {max}")]
    CruiseAboveCeiling { id: DroneId, cruise: f64, max: f64 },
    #[error("drone {id}: mission must list at least one waypoint")]
    EmptyMission { id: DroneId },
    #[error("drone {id}: {kind} deviation runs {from}..{to} but ticks go {bound}")]
    DeviationOutOfRange {
        id: DroneId,
        kind: &'static str,
        from: u64,
        to: String,
        bound: String,
    },
    #[error("drone {id}: deviation range {from}..{to} is reversed")]
    DeviationReversed { id: DroneId, from: u64, to: u64 },
    #[error("event {index}: tick range {from}..{to} is reversed")]
    EventReversed { index: usize, from: u64, to: u64 },
    #[error("event {index}: tick {tick} is outside the run (0..{ticks})")]
    EventOutOfRange { index: usize, tick: u64, ticks: u64 },
    #[error("event {index}: unknown drone {id}")]
    EventUnknownDrone { index: usize, id: DroneId },
    #[error("eval_window_ticks must be at least 1")]
    ZeroWindow,
    #[error("drop_probability {0} is not in [0, 1]")]
    BadDropProbability(f64),
    #[error("trust settings rejected: {0}")]
    BadTrust(String),
    #[error("compliance epsilon {field} must be a finite number > 0, got {value}")]
    BadEpsilon { field: &'static str, value: f64 },
}

impl Scenario {
    /// Every problem that makes the scenario unrunnable, in one pass.
    pub fn validate(&self) -> Vec<ScenarioProblem> {
        let mut problems = Vec::new();
        if self.drones.is_empty() {
            problems.push(ScenarioProblem::NoDrones);
        }
        if self.eval_window_ticks == 0 {
            problems.push(ScenarioProblem::ZeroWindow);
        }
        if !(0.0..=1.0).contains(&self.drop_probability) || !self.drop_probability.is_finite() {
            problems.push(ScenarioProblem::BadDropProbability(self.drop_probability));
        }
        if let Err(err) = self.trust.validate() {
            problems.push(ScenarioProblem::BadTrust(err.to_string()));
        }
        for (field, value) in [
            ("stop_epsilon", self.compliance.stop_epsilon),
            ("speed_epsilon", self.compliance.speed_epsilon),
            ("prediction_epsilon_m", self.compliance.prediction_epsilon_m),
        ] {
            if !(value.is_finite() && value > 0.0) {
                problems.push(ScenarioProblem::BadEpsilon { field, value });
            }
        }

        let mut seen = BTreeSet::new();
        for drone in &self.drones {
            if !seen.insert(drone.id.clone()) {
                problems.push(ScenarioProblem::DuplicateDroneId(drone.id.clone()));
            }
            let ceiling = drone.max_speed_mps.unwrap_or(15.0);
            for (field, value) in [
                ("cruise_speed_mps", Some(drone.cruise_speed_mps)),
                ("max_speed_mps", drone.max_speed_mps),
                ("weight_kg", drone.weight_kg),
                ("comm_ratio", drone.comm_ratio),
            ] {
                if let Some(value) = value {
                    if !(value.is_finite() && value > 0.0) {
                        problems.push(ScenarioProblem::NonPositive {
                            id: drone.id.clone(),
                            field,
                            value,
                        });
                    }
                }
            }
            if drone.cruise_speed_mps > ceiling {
                problems.push(ScenarioProblem::CruiseAboveCeiling {
                    id: drone.id.clone(),
                    cruise: drone.cruise_speed_mps,
                    max: ceiling,
                });
            }
            if let Some(mission) = &drone.mission {
                if mission.is_empty() {
                    problems.push(ScenarioProblem::EmptyMission {
                        id: drone.id.clone(),
                    });
                }
            }
            for window in &drone.deviation {
                if let Some(end) = window.to_tick {
                    if end < window.from_tick {
                        problems.push(ScenarioProblem::DeviationReversed {
                            id: drone.id.clone(),
                            from: window.from_tick,
                            to: end,
                        });
                        continue;
                    }
                }
                let end_in_range = window.to_tick.map_or(true, |end| end < self.ticks);
                if window.from_tick >= self.ticks || !end_in_range {
                    problems.push(ScenarioProblem::DeviationOutOfRange {
                        id: drone.id.clone(),
                        kind: window.kind.label(),
                        from: window.from_tick,
                        to: window
                            .to_tick
                            .map_or_else(|| "end".to_string(), |end| end.to_string()),
                        bound: format!("0..{}", self.ticks),
                    });
                }
            }
        }

        let ids: BTreeSet<_> = self.drones.iter().map(|d| d.id.clone()).collect();
        for (index, event) in self.events.iter().enumerate() {
            match event {
                ScenarioEvent::Object { at_tick, drone_id } => {
                    if *at_tick >= self.ticks {
                        problems.push(ScenarioProblem::EventOutOfRange {
                            index,
                            tick: *at_tick,
                            ticks: self.ticks,
                        });
                    }
                    if !ids.contains(drone_id) {
                        problems.push(ScenarioProblem::EventUnknownDrone {
                            index,
                            id: drone_id.clone(),
                        });
                    }
                }
                ScenarioEvent::WeatherSevere { from_tick, to_tick }
                | ScenarioEvent::SignalInterference { from_tick, to_tick } => {
                    if to_tick < from_tick {
                        problems.push(ScenarioProblem::EventReversed {
                            index,
                            from: *from_tick,
                            to: *to_tick,
                        });
                    } else if *to_tick >= self.ticks {
                        problems.push(ScenarioProblem::EventOutOfRange {
                            index,
                            tick: *to_tick,
                            ticks: self.ticks,
                        });
                    }
                }
            }
        }
        problems
    }

    pub fn weather_severe_at(&self, tick: u64) -> bool {
        self.events.iter().any(|e| {
            matches!(e, ScenarioEvent::WeatherSevere { from_tick, to_tick }
                if (*from_tick..=*to_tick).contains(&tick))
        })
    }

    pub fn interference_at(&self, tick: u64) -> bool {
        self.events.iter().any(|e| {
            matches!(e, ScenarioEvent::SignalInterference { from_tick, to_tick }
                if (*from_tick..=*to_tick).contains(&tick))
        })
    }

    pub fn object_for(&self, id: &DroneId, tick: u64) -> bool {
        self.events.iter().any(|e| {
            matches!(e, ScenarioEvent::Object { at_tick, drone_id }
                if *at_tick == tick && drone_id == id)
        })
    }
}

/// Read and parse a scenario file without checking its content.
pub fn parse_scenario(path: &Path) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Compile the rules catalog a scenario names, resolved relative to the
/// scenario file's directory; without one, the bundled default applies.
pub fn resolve_rules(scenario: &Scenario, scenario_path: &Path) -> Result<SafetyRuleSet, SimError> {
    match &scenario.rules_catalog {
        None => Ok(SafetyRuleSet::bundled_default()),
        Some(rel) => {
            let resolved = match scenario_path.parent() {
                Some(dir) if !rel.is_absolute() => dir.join(rel),
                _ => rel.clone(),
            };
            let text = std::fs::read_to_string(&resolved).map_err(|source| SimError::Io {
                path: resolved.display().to_string(),
                source,
            })?;
            compile_ruleset(&text).map_err(|source| SimError::Rules {
                path: resolved.display().to_string(),
                source,
            })
        }
    }
}

/// Parse a scenario file and compile the rules catalog it points at.
/// Scenario problems are reported all at once.
pub fn load_scenario(path: &Path) -> Result<(Scenario, SafetyRuleSet), SimError> {
    let scenario = parse_scenario(path)?;
    let problems = scenario.validate();
    if !problems.is_empty() {
        return Err(SimError::Invalid { problems });
    }
    let rules = resolve_rules(&scenario, path)?;
    Ok((scenario, rules))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drone(id: &str) -> DroneConfig {
        DroneConfig {
            id: DroneId::new(id),
            start_pos: Vec3::new(0.0, 0.0, 50.0),
            cruise_speed_mps: 5.0,
            max_speed_mps: None,
            weight_kg: None,
            comm_ratio: None,
            mission: None,
            initial_vel: None,
            deviation: Vec::new(),
        }
    }

    fn minimal() -> Scenario {
        Scenario {
            name: "minimal".into(),
            seed: 1,
            ticks: 20,
            eval_window_ticks: 10,
            rules_catalog: None,
            orchestrator: OrchestratorConfig::default(),
            trust: TrustConfig::default(),
            compliance: ComplianceConfig::default(),
            drop_probability: 0.0,
            drones: vec![drone("alpha")],
            events: Vec::new(),
        }
    }

    #[test]
    fn minimal_scenario_is_valid() {
        assert!(minimal().validate().is_empty());
    }

    #[test]
    fn all_problems_reported_together() {
        let mut s = minimal();
        s.drones.push(drone("alpha"));
        s.eval_window_ticks = 0;
        s.drop_probability = 1.5;
        s.events.push(ScenarioEvent::Object {
            at_tick: 99,
            drone_id: DroneId::new("ghost"),
        });
        let problems = s.validate();
        assert!(problems.contains(&ScenarioProblem::DuplicateDroneId(DroneId::new("alpha"))));
        assert!(problems.contains(&ScenarioProblem::ZeroWindow));
        assert!(problems.contains(&ScenarioProblem::BadDropProbability(1.5)));
        assert!(problems.contains(&ScenarioProblem::EventOutOfRange {
            index: 0,
            tick: 99,
            ticks: 20
        }));
        assert!(problems.contains(&ScenarioProblem::EventUnknownDrone {
            index: 0,
            id: DroneId::new("ghost")
        }));
    }

    #[test]
    fn deviation_ranges_are_checked_against_run_length() {
        let mut s = minimal();
        s.drones[0].deviation.push(DeviationWindow {
            from_tick: 30,
            to_tick: None,
            kind: DeviationKind::Silent,
        });
        let problems = s.validate();
        assert_eq!(problems.len(), 1);
        assert!(matches!(
            problems[0],
            ScenarioProblem::DeviationOutOfRange { from: 30, .. }
        ));

        s.drones[0].deviation[0] = DeviationWindow {
            from_tick: 10,
            to_tick: Some(4),
            kind: DeviationKind::Silent,
        };
        assert!(matches!(
            s.validate()[0],
            ScenarioProblem::DeviationReversed { from: 10, to: 4, .. }
        ));
    }

    #[test]
    fn deviation_json_shape_is_flat() {
        let window = DeviationWindow {
            from_tick: 3,
            to_tick: Some(9),
            kind: DeviationKind::WrongState {
                state: StateId::new("S9"),
            },
        };
        let json = serde_json::to_value(&window).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"from_tick": 3, "to_tick": 9, "kind": "wrong_state", "state": "S9"})
        );
        let back: DeviationWindow = serde_json::from_value(json).unwrap();
        assert_eq!(back, window);

        let silent: DeviationWindow =
            serde_json::from_value(serde_json::json!({"from_tick": 0, "kind": "silent"})).unwrap();
        assert!(matches!(silent.kind, DeviationKind::Silent));
        assert!(silent.active_at(1_000_000));
    }

    #[test]
    fn event_predicates_cover_inclusive_ranges() {
        let mut s = minimal();
        s.events = vec![
            ScenarioEvent::WeatherSevere {
                from_tick: 5,
                to_tick: 8,
            },
            ScenarioEvent::SignalInterference {
                from_tick: 2,
                to_tick: 2,
            },
            ScenarioEvent::Object {
                at_tick: 7,
                drone_id: DroneId::new("alpha"),
            },
        ];
        assert!(!s.weather_severe_at(4));
        assert!(s.weather_severe_at(5));
        assert!(s.weather_severe_at(8));
        assert!(!s.weather_severe_at(9));
        assert!(s.interference_at(2));
        assert!(!s.interference_at(3));
        assert!(s.object_for(&DroneId::new("alpha"), 7));
        assert!(!s.object_for(&DroneId::new("alpha"), 6));
        assert!(!s.object_for(&DroneId::new("beta"), 7));
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let mut s = minimal();
        s.drones[0].deviation.push(DeviationWindow {
            from_tick: 1,
            to_tick: Some(5),
            kind: DeviationKind::SpeedBurst { speed_mps: 19.0 },
        });
        s.events.push(ScenarioEvent::WeatherSevere {
            from_tick: 3,
            to_tick: 6,
        });
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
