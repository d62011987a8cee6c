//! Trust scoring from first-hand compliance evidence and second-hand
//! reputation reports.
//!
//! Direct trust is a beta-expectation over conforming vs. violating
//! evaluation windows, discounted by how open the subject has been.
//! Indirect trust is a weighted mean of peers' published scores, weighted
//! by how much the aggregating drone trusts each reporter and how much
//! evidence the reporter claims. The two blend linearly into a combined
//! score that a threshold turns into a trust decision.

mod ledger;

pub use ledger::{Decision, LedgerExport, SubjectExport, SubjectTrust, TrustLedger};

use crate::compliance::{ComplianceVerdict, TickStatus};
use crate::dt_model::DroneId;
use crate::safety::{select_recovery, Countermeasure, SafetyRuleSet, ViolationRef};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrustError {
    #[error("combination weights must be non-negative and sum to 1 (got {direct} + {indirect})")]
    BadWeights { direct: f64, indirect: f64 },
    #[error("decision threshold must lie strictly between 0 and 1 (got {0})")]
    BadThreshold(f64),
    #[error("{field} must lie in [0, 1] (got {value})")]
    BadFraction { field: &'static str, value: f64 },
    #[error("no evaluated windows for subject {0}; nothing to report")]
    NoEvidence(DroneId),
    #[error("reputation report from {reporter} is malformed: {reason}")]
    InvalidReport { reporter: DroneId, reason: String },
}

/// Tunable trust parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustConfig {
    /// Minimum window honesty for the window to count as positive evidence.
    pub honesty_threshold: f64,
    /// Floor for the multiplicative openness discount on direct trust.
    pub openness_floor: f64,
    /// Reports from reporters trusted below this are ignored.
    pub report_trust_floor: f64,
    /// Weight of first-hand evidence in the combined score.
    pub weight_direct: f64,
    /// Weight of aggregated reputation in the combined score.
    pub weight_indirect: f64,
    /// Combined score at or above this counts as trusted.
    pub threshold: f64,
    /// Drop reports older than this many ticks; `None` keeps them forever.
    pub max_report_age_ticks: Option<u64>,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            honesty_threshold: 0.95,
            openness_floor: 0.5,
            report_trust_floor: 0.3,
            weight_direct: 0.7,
            weight_indirect: 0.3,
            threshold: 0.5,
            max_report_age_ticks: None,
        }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<(), TrustError> {
        let fractions = [
            ("honesty_threshold", self.honesty_threshold),
            ("openness_floor", self.openness_floor),
            ("report_trust_floor", self.report_trust_floor),
        ];
        for (field, value) in fractions {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(TrustError::BadFraction { field, value });
            }
        }
        if self.weight_direct < 0.0
            || self.weight_indirect < 0.0
            || (self.weight_direct + self.weight_indirect - 1.0).abs() > 1e-9
        {
            return Err(TrustError::BadWeights {
                direct: self.weight_direct,
                indirect: self.weight_indirect,
            });
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(TrustError::BadThreshold(self.threshold));
        }
        Ok(())
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.weight_direct, self.weight_indirect)
    }
}

/// First-hand evidence about one subject: window counts plus the most
/// recently observed honesty and openness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectEvidence {
    pub positive: u64,
    pub negative: u64,
    pub last_honesty: f64,
    pub last_openness: f64,
}

impl Default for DirectEvidence {
    fn default() -> Self {
        // A stranger starts at the uninformed prior with no openness
        // discount, so the prior comes out at exactly 1/2.
        DirectEvidence { positive: 0, negative: 0, last_honesty: 1.0, last_openness: 1.0 }
    }
}

impl DirectEvidence {
    pub fn total_windows(&self) -> u64 {
        self.positive + self.negative
    }
}

/// Whether a window verdict counts as positive evidence: honest enough and
/// free of physical or state contradictions. Broken trajectory promises
/// only count through the honesty ratio.
pub fn window_is_positive(verdict: &ComplianceVerdict, config: &TrustConfig) -> bool {
    let hard_violations = verdict.count(TickStatus::PhysicsViolation)
        + verdict.count(TickStatus::StateViolation);
    verdict.honesty >= config.honesty_threshold && hard_violations == 0
}

/// The beta-expectation direct score for the accumulated evidence,
/// discounted by the floored openness of the latest window.
pub fn direct_score(evidence: &DirectEvidence, config: &TrustConfig) -> f64 {
    let p = evidence.positive as f64;
    let n = evidence.negative as f64;
    let beta = (p + 1.0) / (p + n + 2.0);
    beta * evidence.last_openness.max(config.openness_floor)
}

/// Fold one evaluation-window verdict into the evidence; returns the new
/// evidence and the resulting direct score.
pub fn update_direct(
    evidence: &DirectEvidence,
    verdict: &ComplianceVerdict,
    config: &TrustConfig,
) -> (DirectEvidence, f64) {
    let mut next = *evidence;
    if window_is_positive(verdict, config) {
        next.positive += 1;
    } else {
        next.negative += 1;
    }
    next.last_honesty = verdict.honesty;
    next.last_openness = verdict.openness;
    let score = direct_score(&next, config);
    (next, score)
}

/// A second-hand trust claim: one reporter's direct score for a subject,
/// weighted by how many windows of evidence back it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationReport {
    pub reporter_id: DroneId,
    pub subject_id: DroneId,
    pub score: f64,
    pub window_count: u64,
    pub tick_issued: u64,
}

impl ReputationReport {
    pub fn validate(&self) -> Result<(), TrustError> {
        if !(0.0..=1.0).contains(&self.score) || self.score.is_nan() {
            return Err(TrustError::InvalidReport {
                reporter: self.reporter_id.clone(),
                reason: format!("score {} is outside [0, 1]", self.score),
            });
        }
        if self.window_count == 0 {
            return Err(TrustError::InvalidReport {
                reporter: self.reporter_id.clone(),
                reason: "window_count must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Trust assumed for a reporter the aggregator has never interacted with.
const UNKNOWN_REPORTER_PRIOR: f64 = 0.5;

/// Aggregate reputation reports into an indirect score: a mean of report
/// scores weighted by reporter trust times claimed evidence. Reporters
/// trusted below the floor are ignored; with no usable reports the
/// uninformed prior 1/2 is returned. Reports are ranked canonically first,
/// so the result is exactly permutation-invariant.
pub fn aggregate_indirect(
    reports: &[ReputationReport],
    reporter_trust: &BTreeMap<DroneId, f64>,
    config: &TrustConfig,
) -> f64 {
    let mut ranked: Vec<&ReputationReport> = reports.iter().collect();
    ranked.sort_by(|a, b| {
        (&a.reporter_id, a.tick_issued, a.window_count)
            .cmp(&(&b.reporter_id, b.tick_issued, b.window_count))
            .then_with(|| a.score.total_cmp(&b.score))
    });
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for report in ranked {
        let trust = reporter_trust
            .get(&report.reporter_id)
            .copied()
            .unwrap_or(UNKNOWN_REPORTER_PRIOR);
        if trust < config.report_trust_floor {
            continue;
        }
        let weight = trust * report.window_count as f64;
        numerator += weight * report.score;
        denominator += weight;
    }
    if denominator <= 0.0 {
        0.5
    } else {
        numerator / denominator
    }
}

/// Blend direct and indirect scores. The weights must be non-negative and
/// sum to one.
pub fn combine(direct: f64, indirect: f64, weights: (f64, f64)) -> Result<f64, TrustError> {
    let (w_d, w_i) = weights;
    if w_d < 0.0 || w_i < 0.0 || (w_d + w_i - 1.0).abs() > 1e-9 {
        return Err(TrustError::BadWeights { direct: w_d, indirect: w_i });
    }
    Ok(w_d * direct + w_i * indirect)
}

/// The outcome of a trust decision; an untrusted subject comes with the
/// countermeasures the decider should apply against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustDecision {
    pub trusted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub countermeasures: Vec<Countermeasure>,
}

/// Threshold rule: trusted iff `combined ≥ tau` (boundary inclusive).
/// When the subject is untrusted, countermeasures come from the recovery
/// plan for the dominant violation, or the default escalation ladder —
/// avoid, slow down, stop — when no single violation dominates.
pub fn decide(
    combined: f64,
    tau: f64,
    dominant: Option<&ViolationRef>,
    rules: &SafetyRuleSet,
) -> TrustDecision {
    debug_assert!(tau > 0.0 && tau < 1.0, "threshold must lie strictly inside (0, 1)");
    if combined >= tau {
        return TrustDecision { trusted: true, countermeasures: Vec::new() };
    }
    let countermeasures = match dominant {
        Some(violation) => select_recovery(violation, rules).actions,
        None => vec![
            Countermeasure::Avoid,
            Countermeasure::MinimizeSpeed,
            Countermeasure::Stop,
        ],
    };
    TrustDecision { trusted: false, countermeasures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::CausalCause;
    use proptest::prelude::*;

    fn config() -> TrustConfig {
        TrustConfig::default()
    }

    fn window(honesty: f64, openness: f64, hard_violations: u64) -> ComplianceVerdict {
        let mut summary = BTreeMap::new();
        if hard_violations > 0 {
            summary.insert(TickStatus::PhysicsViolation, hard_violations);
        }
        ComplianceVerdict {
            drone_id: DroneId::new("subject"),
            per_tick: Vec::new(),
            honesty,
            openness,
            no_declaration: false,
            summary,
        }
    }

    #[test]
    fn a_conforming_first_window_scores_two_thirds() {
        let (evidence, score) =
            update_direct(&DirectEvidence::default(), &window(1.0, 1.0, 0), &config());
        assert_eq!(evidence.positive, 1);
        assert_eq!(evidence.negative, 0);
        assert!((score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn a_violating_first_window_scores_one_third() {
        let (evidence, score) =
            update_direct(&DirectEvidence::default(), &window(1.0, 1.0, 2), &config());
        assert_eq!(evidence.negative, 1);
        assert!((score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_windows_means_the_uninformed_prior() {
        assert_eq!(direct_score(&DirectEvidence::default(), &config()), 0.5);
    }

    #[test]
    fn low_honesty_counts_as_negative_even_without_hard_violations() {
        let (evidence, _) =
            update_direct(&DirectEvidence::default(), &window(0.9, 1.0, 0), &config());
        assert_eq!(evidence.negative, 1);
    }

    #[test]
    fn hard_violations_count_as_negative_even_at_full_honesty() {
        // A violation on an undeclared tick leaves honesty at 1.0.
        let (evidence, _) =
            update_direct(&DirectEvidence::default(), &window(1.0, 0.8, 1), &config());
        assert_eq!(evidence.negative, 1);
    }

    #[test]
    fn openness_discount_is_floored() {
        let (_, score) =
            update_direct(&DirectEvidence::default(), &window(1.0, 0.2, 0), &config());
        assert!((score - (2.0 / 3.0) * 0.5).abs() < 1e-12);
        let (_, score) =
            update_direct(&DirectEvidence::default(), &window(1.0, 0.8, 0), &config());
        assert!((score - (2.0 / 3.0) * 0.8).abs() < 1e-12);
    }

    fn report(reporter: &str, score: f64, windows: u64) -> ReputationReport {
        ReputationReport {
            reporter_id: DroneId::new(reporter),
            subject_id: DroneId::new("subject"),
            score,
            window_count: windows,
            tick_issued: 0,
        }
    }

    #[test]
    fn no_reports_aggregate_to_the_prior() {
        assert_eq!(aggregate_indirect(&[], &BTreeMap::new(), &config()), 0.5);
    }

    #[test]
    fn symmetric_reports_cancel_out() {
        let reports = [report("a", 0.9, 1), report("b", 0.1, 1)];
        let trust = BTreeMap::from([(DroneId::new("a"), 1.0), (DroneId::new("b"), 1.0)]);
        assert!((aggregate_indirect(&reports, &trust, &config()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighting_follows_reporter_trust_times_evidence() {
        let reports = [report("a", 0.8, 3), report("b", 0.2, 2)];
        let trust = BTreeMap::from([(DroneId::new("a"), 1.0), (DroneId::new("b"), 0.5)]);
        let got = aggregate_indirect(&reports, &trust, &config());
        assert!((got - 0.65).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn distrusted_reporters_are_ignored() {
        let reports = [report("a", 0.9, 5), report("b", 0.0, 100)];
        let trust = BTreeMap::from([(DroneId::new("a"), 1.0), (DroneId::new("b"), 0.2)]);
        let got = aggregate_indirect(&reports, &trust, &config());
        assert!((got - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unknown_reporters_get_a_neutral_prior() {
        let reports = [report("stranger", 0.8, 2)];
        let got = aggregate_indirect(&reports, &BTreeMap::new(), &config());
        assert!((got - 0.8).abs() < 1e-12);
    }

    #[test]
    fn combine_matches_linear_arithmetic() {
        assert!((combine(0.8, 0.4, (0.7, 0.3)).unwrap() - 0.68).abs() < 1e-12);
        assert_eq!(combine(1.0, 0.0, (1.0, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn combine_rejects_bad_weights() {
        assert!(combine(0.5, 0.5, (0.6, 0.3)).is_err());
        assert!(combine(0.5, 0.5, (-0.2, 1.2)).is_err());
    }

    #[test]
    fn decide_is_boundary_inclusive() {
        let rules = SafetyRuleSet::bundled_default();
        assert!(decide(0.68, 0.5, None, &rules).trusted);
        assert!(decide(0.5, 0.5, None, &rules).trusted);
        let verdict = decide(0.33, 0.5, None, &rules);
        assert!(!verdict.trusted);
        assert_eq!(
            verdict.countermeasures,
            vec![Countermeasure::Avoid, Countermeasure::MinimizeSpeed, Countermeasure::Stop]
        );
    }

    #[test]
    fn decide_uses_the_dominant_violation_for_countermeasures() {
        let rules = SafetyRuleSet::bundled_default();
        let dominant = ViolationRef {
            rule_id: "min_separation".into(),
            cause: CausalCause::CoordinationFailure,
        };
        let verdict = decide(0.2, 0.5, Some(&dominant), &rules);
        assert_eq!(
            verdict.countermeasures,
            vec![Countermeasure::Avoid, Countermeasure::MinimizeSpeed]
        );
    }

    #[test]
    fn config_validation_catches_bad_settings() {
        let mut c = TrustConfig::default();
        c.weight_direct = 0.8;
        assert!(matches!(c.validate(), Err(TrustError::BadWeights { .. })));
        let mut c = TrustConfig::default();
        c.threshold = 1.0;
        assert!(matches!(c.validate(), Err(TrustError::BadThreshold(_))));
        assert!(TrustConfig::default().validate().is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn direct_scores_stay_in_bounds_under_any_window_stream(
            windows in proptest::collection::vec(
                (0.0f64..=1.0, 0.0f64..=1.0, 0u64..3), 0..60,
            ),
        ) {
            let cfg = config();
            let mut evidence = DirectEvidence::default();
            prop_assert!((0.0..=1.0).contains(&direct_score(&evidence, &cfg)));
            for (honesty, openness, hard) in windows {
                let (next, score) = update_direct(&evidence, &window(honesty, openness, hard), &cfg);
                prop_assert!((0.0..=1.0).contains(&score));
                prop_assert_eq!(next.total_windows(), evidence.total_windows() + 1);
                evidence = next;
            }
        }

        #[test]
        fn positive_windows_never_lower_direct_trust(
            positive in 0u64..50,
            negative in 0u64..50,
            openness in 0.0f64..=1.0,
        ) {
            let cfg = config();
            let before = DirectEvidence {
                positive, negative, last_honesty: 1.0, last_openness: openness,
            };
            let after = DirectEvidence { positive: positive + 1, ..before };
            prop_assert!(direct_score(&after, &cfg) >= direct_score(&before, &cfg));
            let worse = DirectEvidence { negative: negative + 1, ..before };
            prop_assert!(direct_score(&worse, &cfg) <= direct_score(&before, &cfg));
        }

        #[test]
        fn decide_is_monotone_in_the_combined_score(
            lo in 0.0f64..=1.0,
            hi in 0.0f64..=1.0,
            tau in 0.01f64..0.99,
        ) {
            let rules = SafetyRuleSet::bundled_default();
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            if decide(lo, tau, None, &rules).trusted {
                prop_assert!(decide(hi, tau, None, &rules).trusted);
            }
        }

        #[test]
        fn aggregation_is_permutation_invariant(
            scores in proptest::collection::vec(
                (0.0f64..=1.0, 1u64..5, 0.0f64..=1.0), 1..12,
            ),
            seed in proptest::num::u64::ANY,
        ) {
            let cfg = config();
            let mut trust = BTreeMap::new();
            let reports: Vec<ReputationReport> = scores
                .iter()
                .enumerate()
                .map(|(i, (score, windows, reporter_trust))| {
                    let id = format!("r{i}");
                    trust.insert(DroneId::new(id.clone()), *reporter_trust);
                    report(&id, *score, *windows)
                })
                .collect();
            let baseline = aggregate_indirect(&reports, &trust, &cfg);
            let mut shuffled = reports.clone();
            // Deterministic Fisher–Yates driven by the seed.
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(aggregate_indirect(&shuffled, &trust, &cfg), baseline);
        }

        #[test]
        fn combined_is_a_convex_blend(
            direct in 0.0f64..=1.0,
            indirect in 0.0f64..=1.0,
            w in 0.0f64..=1.0,
        ) {
            let c = combine(direct, indirect, (w, 1.0 - w)).unwrap();
            let (lo, hi) = if direct <= indirect { (direct, indirect) } else { (indirect, direct) };
            prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
            let fixed = combine(direct, direct, (w, 1.0 - w)).unwrap();
            prop_assert!((fixed - direct).abs() < 1e-12);
        }
    }
}
