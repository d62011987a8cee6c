//! Catalog document parsing, integrity checking, and compilation.

use super::{CausalFactor, Hazard, RecoveryPlan, SafetyRuleSet, UcaTemplate};
use super::{
    RULE_MAX_SPEED, RULE_MAX_WEIGHT, RULE_MIN_SEPARATION, RULE_TIMING_TOLERANCE,
    RULE_WEATHER_SEPARATION,
};
use crate::canonical_json;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Numeric limits enforced at run time. Every field has a conservative
/// default so a partial (or empty) catalog still compiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericRules {
    /// Pairwise separation floor in metres (boundary itself is compliant).
    pub min_separation_m: f64,
    /// Drones must weigh strictly less than this many kilograms.
    pub max_weight_kg: f64,
    /// Multiplier applied to the separation floor under severe weather.
    pub weather_separation_factor: f64,
    /// Airspace speed ceiling in metres per second.
    pub max_speed_mps: f64,
    /// Allowed slack, in ticks, between expected and observed actions.
    pub timing_tolerance_ticks: u32,
    /// Retention window for incident reports, in ticks.
    pub report_period_ticks: u64,
}

impl Default for NumericRules {
    fn default() -> Self {
        NumericRules {
            min_separation_m: 40.0,
            max_weight_kg: 20.0,
            weather_separation_factor: 1.5,
            max_speed_mps: 25.0,
            timing_tolerance_ticks: 2,
            report_period_ticks: 100,
        }
    }
}

impl NumericRules {
    /// Required separation in metres, widened under severe weather.
    pub fn required_separation_m(&self, weather_severe: bool) -> f64 {
        if weather_severe {
            self.min_separation_m * self.weather_separation_factor
        } else {
            self.min_separation_m
        }
    }
}

/// The hazard catalog document. All sections default to empty so that a
/// minimal catalog can carry numeric overrides alone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardCatalog {
    pub hazards: Vec<Hazard>,
    pub ucas: Vec<UcaTemplate>,
    pub factors: Vec<CausalFactor>,
    pub plans: Vec<RecoveryPlan>,
    pub numeric: NumericRules,
}

/// One integrity defect in a catalog document.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogViolation {
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("uca {uca_id} references missing hazard id {hazard_id}")]
    UnknownHazard { uca_id: String, hazard_id: String },
    #[error("factor {factor_id} references missing uca id {uca_id}")]
    UnknownUca { factor_id: String, uca_id: String },
    #[error("factor {factor_id} references missing plan id {plan_id}")]
    UnknownPlan { factor_id: String, plan_id: String },
    #[error("plan {0} has no actions")]
    EmptyPlan(String),
    #[error("numeric.{field} must be positive and finite (got {value})")]
    BadNumeric { field: &'static str, value: f64 },
    #[error("numeric.weather_separation_factor must be at least 1 (got {0})")]
    WeatherFactorBelowOne(f64),
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("malformed catalog document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid catalog document:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<CatalogViolation>),
}

/// Parse a catalog document and compile it into a rule set. Every broken
/// cross-reference and out-of-range number in the document is reported, not
/// just the first.
pub fn compile_ruleset(text: &str) -> Result<SafetyRuleSet, CatalogError> {
    let catalog: HazardCatalog = serde_json::from_str(text)?;
    let mut violations = Vec::new();

    let mut hazard_ids = BTreeSet::new();
    for h in &catalog.hazards {
        if !hazard_ids.insert(h.id.as_str()) {
            violations.push(CatalogViolation::DuplicateId { kind: "hazard", id: h.id.clone() });
        }
    }
    let mut uca_ids = BTreeSet::new();
    for u in &catalog.ucas {
        if !uca_ids.insert(u.id.as_str()) {
            violations.push(CatalogViolation::DuplicateId { kind: "uca", id: u.id.clone() });
        }
        if !hazard_ids.contains(u.hazard_id.as_str()) {
            violations.push(CatalogViolation::UnknownHazard {
                uca_id: u.id.clone(),
                hazard_id: u.hazard_id.clone(),
            });
        }
    }
    let mut plan_ids = BTreeSet::new();
    for p in &catalog.plans {
        if !plan_ids.insert(p.id.as_str()) {
            violations.push(CatalogViolation::DuplicateId { kind: "plan", id: p.id.clone() });
        }
        if p.actions.is_empty() {
            violations.push(CatalogViolation::EmptyPlan(p.id.clone()));
        }
    }
    let mut factor_ids = BTreeSet::new();
    for f in &catalog.factors {
        if !factor_ids.insert(f.id.as_str()) {
            violations.push(CatalogViolation::DuplicateId { kind: "factor", id: f.id.clone() });
        }
        if !uca_ids.contains(f.uca_id.as_str()) {
            violations.push(CatalogViolation::UnknownUca {
                factor_id: f.id.clone(),
                uca_id: f.uca_id.clone(),
            });
        }
        if !plan_ids.contains(f.recovery_plan_id.as_str()) {
            violations.push(CatalogViolation::UnknownPlan {
                factor_id: f.id.clone(),
                plan_id: f.recovery_plan_id.clone(),
            });
        }
    }

    let n = &catalog.numeric;
    for (field, value) in [
        ("min_separation_m", n.min_separation_m),
        ("max_weight_kg", n.max_weight_kg),
        ("max_speed_mps", n.max_speed_mps),
        ("weather_separation_factor", n.weather_separation_factor),
    ] {
        if !(value.is_finite() && value > 0.0) {
            violations.push(CatalogViolation::BadNumeric { field, value });
        }
    }
    if n.weather_separation_factor.is_finite() && n.weather_separation_factor < 1.0 {
        violations.push(CatalogViolation::WeatherFactorBelowOne(n.weather_separation_factor));
    }

    if !violations.is_empty() {
        return Err(CatalogError::Invalid(violations));
    }

    let rule_ids = BTreeSet::from(
        [
            RULE_MIN_SEPARATION,
            RULE_MAX_WEIGHT,
            RULE_MAX_SPEED,
            RULE_WEATHER_SEPARATION,
            RULE_TIMING_TOLERANCE,
        ]
        .map(str::to_string),
    );
    Ok(SafetyRuleSet { catalog, rule_ids })
}

/// Render a catalog as canonical JSON (the inverse of [`compile_ruleset`]
/// for valid documents).
pub fn serialize_catalog(catalog: &HazardCatalog) -> String {
    canonical_json::to_canonical_pretty(catalog).expect("catalog serializes to JSON")
}

/// The catalog document shipped with this crate (see
/// `assets/catalogs/default_catalog.json` at the repository root).
pub fn default_catalog_json() -> &'static str {
    include_str!("../../../../assets/catalogs/default_catalog.json")
}
