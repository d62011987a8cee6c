//! Deterministic discrete-time simulation of a small drone swarm.
//!
//! Each drone follows a waypoint mission with a simple autopilot that walks
//! the canonical control state machine, broadcasts telemetry and future
//! locations, checks every peer's trace against that peer's declared twin
//! at fixed evaluation windows, and reacts to trust decisions with
//! countermeasures. Scripted deviations inject dishonest behaviour, and an
//! optional orchestrator dispatches recovery plans for reported violations.

mod agent;
mod orchestrator;
mod output;
mod runner;
mod scenario;

pub use agent::{step_kinematics, KinematicLimits};
pub use orchestrator::{Orchestrator, PlanLogEntry, PlanLogKind, ViolationReportMsg};
pub use output::{write_outputs, RunManifest};
pub use runner::{run_scenario, SimulationResult, TrustSeriesRow};
pub use scenario::{
    load_scenario, parse_scenario, resolve_rules, DeviationKind, DeviationWindow, DroneConfig,
    OrchestratorConfig, Scenario, ScenarioEvent, ScenarioProblem,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", problems.iter().map(|p| format!("  - {p}")).collect::<Vec<_>>().join("\n"))]
    Invalid { problems: Vec<ScenarioProblem> },
    #[error("rules catalog {path}: {source}")]
    Rules {
        path: String,
        #[source]
        source: crate::safety::CatalogError,
    },
}
