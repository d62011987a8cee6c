//! Concrete runtime safety checks against a compiled rule set.

use super::{CausalCause, RecoveryPlan, SafetyRuleSet, UcaType};
use super::{RULE_MAX_SPEED, RULE_MIN_SEPARATION, RULE_WEATHER_SEPARATION};
use crate::dt_model::{GuardPredicate, StaticAttributes};
use crate::geom::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Outcome of a pairwise separation check. Distances are reported rounded
/// to three decimals; the comparison itself is exact, and sitting exactly on
/// the required distance is compliant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum SeparationCheck {
    Ok { distance_m: f64, required_m: f64 },
    Violation { distance_m: f64, required_m: f64 },
}

impl SeparationCheck {
    pub fn is_violation(&self) -> bool {
        matches!(self, SeparationCheck::Violation { .. })
    }
}

/// Check the separation rule for a pair of positions. Severe weather widens
/// the floor by the configured factor.
pub fn check_separation(
    pos_a: Vec3,
    pos_b: Vec3,
    rules: &SafetyRuleSet,
    weather_severe: bool,
) -> SeparationCheck {
    let distance = pos_a.distance(&pos_b);
    let required = rules.numeric().required_separation_m(weather_severe);
    if distance < required {
        SeparationCheck::Violation { distance_m: round3(distance), required_m: required }
    } else {
        SeparationCheck::Ok { distance_m: round3(distance), required_m: required }
    }
}

/// A design-time attribute gate failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StaticViolation {
    /// Weight must be strictly below the limit.
    #[error("max_weight: declared weight {weight_kg} kg is not strictly below {limit_kg} kg")]
    MaxWeight { weight_kg: f64, limit_kg: f64 },
    #[error("max_speed: declared speed rating {max_speed_mps} m/s exceeds ceiling {limit_mps} m/s")]
    MaxSpeed { max_speed_mps: f64, limit_mps: f64 },
    #[error("license: operating license not confirmed")]
    License,
    #[error("airworthiness: airworthiness certification not confirmed")]
    Airworthiness,
}

/// Gate a drone's declared static attributes against the rule set. Returns
/// every violated rule; an empty result means the drone may participate.
pub fn check_static(attrs: &StaticAttributes, rules: &SafetyRuleSet) -> Vec<StaticViolation> {
    let mut out = Vec::new();
    let n = rules.numeric();
    if !(attrs.weight_kg < n.max_weight_kg) {
        out.push(StaticViolation::MaxWeight {
            weight_kg: attrs.weight_kg,
            limit_kg: n.max_weight_kg,
        });
    }
    if attrs.max_speed_mps > n.max_speed_mps {
        out.push(StaticViolation::MaxSpeed {
            max_speed_mps: attrs.max_speed_mps,
            limit_mps: n.max_speed_mps,
        });
    }
    if !attrs.license_ok {
        out.push(StaticViolation::License);
    }
    if !attrs.airworthiness_ok {
        out.push(StaticViolation::Airworthiness);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("nothing to classify: neither an expected nor an observed action was given")]
    NothingToClassify,
}

/// Compare an expected control action against an observed one and classify
/// the discrepancy, if any. `None` means the observation conforms.
///
/// Decision order: an action nobody expected is a commission; a missing
/// expected action is an omission; with both present, timing outside the
/// rule set's tolerance is too early or too late, and a different token
/// delivered at the very tick the action was due is a wrong value.
pub fn classify_uca(
    expected: Option<(&str, i64)>,
    observed: Option<(&str, i64)>,
    rules: &SafetyRuleSet,
) -> Result<Option<UcaType>, ClassifyError> {
    let tolerance = i64::from(rules.numeric().timing_tolerance_ticks);
    match (expected, observed) {
        (None, None) => Err(ClassifyError::NothingToClassify),
        (None, Some(_)) => Ok(Some(UcaType::Commission)),
        (Some(_), None) => Ok(Some(UcaType::Omission)),
        (Some((exp_token, exp_tick)), Some((obs_token, obs_tick))) => {
            if obs_tick < exp_tick - tolerance {
                Ok(Some(UcaType::TooEarly))
            } else if obs_tick > exp_tick + tolerance {
                Ok(Some(UcaType::TooLate))
            } else if obs_tick == exp_tick && obs_token != exp_token {
                Ok(Some(UcaType::WrongValue))
            } else {
                Ok(None)
            }
        }
    }
}

/// A runtime violation, identified by rule and attributed cause, looked up
/// in the causal-factor table to pick countermeasures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRef {
    /// Rule identifier (e.g. `min_separation`) or hazard token
    /// (e.g. `signal_interference`).
    pub rule_id: String,
    pub cause: CausalCause,
}

/// The guard condition a violation identifier corresponds to, if any.
fn condition_for(rule_id: &str) -> Option<GuardPredicate> {
    match rule_id {
        RULE_MIN_SEPARATION => Some(GuardPredicate::SeparationLtMin),
        RULE_WEATHER_SEPARATION => Some(GuardPredicate::WeatherSevere),
        RULE_MAX_SPEED => Some(GuardPredicate::SpeedGtMax),
        "signal_interference" => Some(GuardPredicate::SignalInterference),
        _ => None,
    }
}

/// Pick the recovery plan for a violation: the first causal factor (in id
/// order) whose cause matches and whose UCA's condition corresponds to the
/// violated rule wins; with no match the fallback plan (stop, notify the
/// orchestrator) applies.
pub fn select_recovery(violation: &ViolationRef, rules: &SafetyRuleSet) -> RecoveryPlan {
    if let Some(condition) = condition_for(&violation.rule_id) {
        let mut factors: Vec<_> = rules.catalog().factors.iter().collect();
        factors.sort_by(|a, b| a.id.cmp(&b.id));
        for f in factors {
            if f.cause != violation.cause {
                continue;
            }
            let Some(uca) = rules.uca(&f.uca_id) else { continue };
            if uca.condition != condition {
                continue;
            }
            if let Some(plan) = rules.plan(&f.recovery_plan_id) {
                return plan.clone();
            }
        }
    }
    rules.fallback_plan()
}
