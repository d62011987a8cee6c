//! Hazard analysis artifacts and the runtime safety checks derived from
//! them.
//!
//! The source of truth is a *hazard catalog* document: hazards at the system
//! boundary, unsafe-control-action (UCA) templates that describe how a
//! control action can go wrong, causal factors linking each UCA to a cause
//! and a recovery plan, and the numeric limits the checkers enforce.
//! [`compile_ruleset`] turns a catalog document into a [`SafetyRuleSet`]
//! after checking referential integrity; the check functions in this module
//! then answer the concrete questions: is this pair too close, are these
//! static attributes acceptable, how does an observed action compare with
//! the expected one, and which recovery plan applies to a violation.

mod catalog;
mod checks;

pub use catalog::{
    compile_ruleset, default_catalog_json, serialize_catalog, CatalogError, CatalogViolation,
    HazardCatalog, NumericRules,
};
pub use checks::{
    check_separation, check_static, classify_uca, select_recovery, ClassifyError, SeparationCheck,
    StaticViolation, ViolationRef,
};

use crate::dt_model::GuardPredicate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Rule identifier: pairwise separation floor.
pub const RULE_MIN_SEPARATION: &str = "min_separation";
/// Rule identifier: takeoff weight limit.
pub const RULE_MAX_WEIGHT: &str = "max_weight";
/// Rule identifier: airspace speed ceiling.
pub const RULE_MAX_SPEED: &str = "max_speed";
/// Rule identifier: widened separation under severe weather.
pub const RULE_WEATHER_SEPARATION: &str = "weather_separation";
/// Rule identifier: action timing tolerance.
pub const RULE_TIMING_TOLERANCE: &str = "timing_tolerance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Catastrophic,
}

/// Part of the system a hazard lives at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemComponent {
    PhysicalDrone,
    SoftwareController,
    NavigationSystem,
    Orchestrator,
    PeerDrones,
}

/// A system-level hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hazard {
    pub id: String,
    pub description: String,
    pub system_boundary: BTreeSet<SystemComponent>,
    pub severity: Severity,
}

/// The ways a control action can be unsafe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UcaType {
    /// Provided although it should not be.
    Commission,
    /// Not provided although it should be.
    Omission,
    TooEarly,
    TooLate,
    WrongValue,
}

/// Template describing one unsafe control action for a hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcaTemplate {
    pub id: String,
    pub hazard_id: String,
    /// Control action token, e.g. `maintain_separation`.
    pub action: String,
    pub uca_type: UcaType,
    /// Context in which the action pattern is hazardous.
    pub condition: GuardPredicate,
}

/// Root cause category for a UCA occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalCause {
    ConnectionProblem,
    EnvironmentInfluence,
    InternalFault,
    CoordinationFailure,
}

/// Links a UCA and a cause to the plan that addresses the combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalFactor {
    pub id: String,
    pub uca_id: String,
    pub cause: CausalCause,
    pub recovery_plan_id: String,
}

/// A countermeasure a drone or orchestrator can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Countermeasure {
    Avoid,
    MinimizeSpeed,
    Stop,
    Reroute,
    NotifyOrchestrator,
}

/// Ordered countermeasures with a completion deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub id: String,
    pub actions: Vec<Countermeasure>,
    /// Ticks allowed between dispatch and the condition clearing.
    pub deadline_ticks: u64,
}

/// A compiled, integrity-checked catalog plus the derived set of checkable
/// rule identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyRuleSet {
    catalog: HazardCatalog,
    rule_ids: BTreeSet<String>,
}

impl SafetyRuleSet {
    pub fn numeric(&self) -> &NumericRules {
        &self.catalog.numeric
    }

    pub fn catalog(&self) -> &HazardCatalog {
        &self.catalog
    }

    /// Identifiers of every rule this set can check. Covers all numeric
    /// constraints; FSM states reference these in `safety_annotations`.
    pub fn rule_ids(&self) -> &BTreeSet<String> {
        &self.rule_ids
    }

    pub fn hazard(&self, id: &str) -> Option<&Hazard> {
        self.catalog.hazards.iter().find(|h| h.id == id)
    }

    pub fn uca(&self, id: &str) -> Option<&UcaTemplate> {
        self.catalog.ucas.iter().find(|u| u.id == id)
    }

    pub fn plan(&self, id: &str) -> Option<&RecoveryPlan> {
        self.catalog.plans.iter().find(|p| p.id == id)
    }

    /// The plan applied when no causal factor matches a violation: stop and
    /// report to the orchestrator, within the default omission deadline.
    pub fn fallback_plan(&self) -> RecoveryPlan {
        RecoveryPlan {
            id: "plan-fallback".into(),
            actions: vec![Countermeasure::Stop, Countermeasure::NotifyOrchestrator],
            deadline_ticks: 10,
        }
    }

    /// Compile the catalog shipped with this crate.
    pub fn bundled_default() -> Self {
        compile_ruleset(default_catalog_json()).expect("bundled catalog compiles")
    }

    /// Numeric defaults only (the empty catalog).
    pub fn empty_default() -> Self {
        compile_ruleset("{}").expect("empty catalog compiles")
    }
}
