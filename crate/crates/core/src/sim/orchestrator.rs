//! The optional ground-side coordinator: receives violation reports from
//! drones, dispatches recovery plans to the involved pair, tracks recovery
//! deadlines, and escalates to a stop order when a plan fails.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dt_model::{DigitalTwin, DroneId};
use crate::geom::Vec3;
use crate::safety::{
    select_recovery, CausalCause, Countermeasure, RecoveryPlan, SafetyRuleSet, ViolationRef,
    RULE_MIN_SEPARATION, RULE_WEATHER_SEPARATION,
};

/// A drone telling the orchestrator that a peer broke a rule during the
/// last evaluation window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReportMsg {
    pub reporter: DroneId,
    pub subject: DroneId,
    pub rule_id: String,
    pub cause: CausalCause,
    pub first_violation_tick: u64,
    pub window_end_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanLogKind {
    Dispatch,
    Recovered,
    RecoveryFailed,
    Escalation,
    RejectedUnknown,
}

/// One line of the plan log, written as JSONL by the simulation outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanLogEntry {
    pub tick: u64,
    pub kind: PlanLogKind,
    pub subject: DroneId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporter: Option<DroneId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<Countermeasure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<DroneId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_tick: Option<u64>,
}

#[derive(Debug)]
struct ActiveDispatch {
    subject: DroneId,
    reporter: DroneId,
    rule_id: String,
    plan: RecoveryPlan,
    dispatched_at: u64,
    deadline_tick: u64,
    resolved: bool,
}

#[derive(Debug)]
pub struct Orchestrator {
    registry: BTreeMap<DroneId, DigitalTwin>,
    /// Dedup horizon: a second report about the same drone and rule within
    /// this many ticks of a dispatch does not trigger another plan.
    report_period_ticks: u64,
    last_dispatch: BTreeMap<(DroneId, String), u64>,
    last_receipt: BTreeMap<(DroneId, String), u64>,
    active: Vec<ActiveDispatch>,
    pub log: Vec<PlanLogEntry>,
}

impl Orchestrator {
    pub fn new(report_period_ticks: u64) -> Self {
        Orchestrator {
            registry: BTreeMap::new(),
            report_period_ticks,
            last_dispatch: BTreeMap::new(),
            last_receipt: BTreeMap::new(),
            active: Vec::new(),
            log: Vec::new(),
        }
    }

    /// Drones hand their twin over at startup; coordination only works for
    /// drones the orchestrator knows.
    pub fn register_twin(&mut self, twin: DigitalTwin) {
        self.registry.insert(twin.drone_id.clone(), twin);
    }

    pub fn knows(&self, id: &DroneId) -> bool {
        self.registry.contains_key(id)
    }

    /// Handle one violation report. Returns the recovery plan and its
    /// delivery targets when a new dispatch is warranted; repeat reports
    /// inside the dedup horizon and reports about unregistered drones
    /// dispatch nothing.
    pub fn receive_report(
        &mut self,
        tick: u64,
        msg: &ViolationReportMsg,
        rules: &SafetyRuleSet,
    ) -> Option<(RecoveryPlan, Vec<DroneId>)> {
        let key = (msg.subject.clone(), msg.rule_id.clone());
        self.last_receipt.insert(key.clone(), tick);
        if !self.knows(&msg.subject) {
            self.log.push(PlanLogEntry {
                tick,
                kind: PlanLogKind::RejectedUnknown,
                subject: msg.subject.clone(),
                reporter: Some(msg.reporter.clone()),
                rule_id: Some(msg.rule_id.clone()),
                plan_id: None,
                actions: Vec::new(),
                targets: Vec::new(),
                deadline_tick: None,
            });
            return None;
        }
        if let Some(&at) = self.last_dispatch.get(&key) {
            if tick.saturating_sub(at) <= self.report_period_ticks {
                return None;
            }
        }
        let plan = select_recovery(
            &ViolationRef { rule_id: msg.rule_id.clone(), cause: msg.cause },
            rules,
        );
        let deadline_tick = tick + plan.deadline_ticks;
        let targets = vec![msg.reporter.clone(), msg.subject.clone()];
        self.last_dispatch.insert(key, tick);
        self.log.push(PlanLogEntry {
            tick,
            kind: PlanLogKind::Dispatch,
            subject: msg.subject.clone(),
            reporter: Some(msg.reporter.clone()),
            rule_id: Some(msg.rule_id.clone()),
            plan_id: Some(plan.id.clone()),
            actions: plan.actions.clone(),
            targets: targets.clone(),
            deadline_tick: Some(deadline_tick),
        });
        self.active.push(ActiveDispatch {
            subject: msg.subject.clone(),
            reporter: msg.reporter.clone(),
            rule_id: msg.rule_id.clone(),
            plan: plan.clone(),
            dispatched_at: tick,
            deadline_tick,
            resolved: false,
        });
        Some((plan, targets))
    }

    /// Settle every dispatch whose deadline is this tick. Separation rules
    /// are judged by the live distance between the reported pair; other
    /// rules count as recovered when no fresh report arrived since the
    /// dispatch. Failures escalate: the fallback stop plan goes to the
    /// subject, untracked.
    pub fn check_deadlines(
        &mut self,
        tick: u64,
        positions: &BTreeMap<DroneId, Vec3>,
        weather: bool,
        rules: &SafetyRuleSet,
    ) -> Vec<(RecoveryPlan, Vec<DroneId>)> {
        let mut escalations = Vec::new();
        let required = rules.numeric().required_separation_m(weather);
        for d in &mut self.active {
            if d.resolved || d.deadline_tick != tick {
                continue;
            }
            d.resolved = true;
            let recovered = match d.rule_id.as_str() {
                RULE_MIN_SEPARATION | RULE_WEATHER_SEPARATION => {
                    match (positions.get(&d.reporter), positions.get(&d.subject)) {
                        (Some(a), Some(b)) => a.distance(b) >= required,
                        _ => false,
                    }
                }
                _ => self
                    .last_receipt
                    .get(&(d.subject.clone(), d.rule_id.clone()))
                    .map_or(true, |&t| t <= d.dispatched_at),
            };
            if recovered {
                self.log.push(PlanLogEntry {
                    tick,
                    kind: PlanLogKind::Recovered,
                    subject: d.subject.clone(),
                    reporter: Some(d.reporter.clone()),
                    rule_id: Some(d.rule_id.clone()),
                    plan_id: Some(d.plan.id.clone()),
                    actions: Vec::new(),
                    targets: Vec::new(),
                    deadline_tick: None,
                });
            } else {
                self.log.push(PlanLogEntry {
                    tick,
                    kind: PlanLogKind::RecoveryFailed,
                    subject: d.subject.clone(),
                    reporter: Some(d.reporter.clone()),
                    rule_id: Some(d.rule_id.clone()),
                    plan_id: Some(d.plan.id.clone()),
                    actions: Vec::new(),
                    targets: Vec::new(),
                    deadline_tick: None,
                });
                let fallback = rules.fallback_plan();
                self.log.push(PlanLogEntry {
                    tick,
                    kind: PlanLogKind::Escalation,
                    subject: d.subject.clone(),
                    reporter: Some(d.reporter.clone()),
                    rule_id: Some(d.rule_id.clone()),
                    plan_id: Some(fallback.id.clone()),
                    actions: fallback.actions.clone(),
                    targets: vec![d.subject.clone()],
                    deadline_tick: None,
                });
                escalations.push((fallback, vec![d.subject.clone()]));
            }
        }
        escalations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dt_model::canonical_twin;

    fn msg(reporter: &str, subject: &str, rule: &str, cause: CausalCause) -> ViolationReportMsg {
        ViolationReportMsg {
            reporter: DroneId::new(reporter),
            subject: DroneId::new(subject),
            rule_id: rule.to_string(),
            cause,
            first_violation_tick: 3,
            window_end_tick: 9,
        }
    }

    fn orchestrator_with(ids: &[&str]) -> Orchestrator {
        let mut o = Orchestrator::new(100);
        for id in ids {
            o.register_twin(canonical_twin(DroneId::new(*id)));
        }
        o
    }

    #[test]
    fn separation_report_dispatches_avoidance_to_both_drones() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        let (plan, targets) = o
            .receive_report(
                9,
                &msg("alpha", "bravo", RULE_MIN_SEPARATION, CausalCause::CoordinationFailure),
                &rules,
            )
            .expect("first report dispatches");
        assert_eq!(plan.actions, vec![Countermeasure::Avoid, Countermeasure::MinimizeSpeed]);
        assert_eq!(targets, vec![DroneId::new("alpha"), DroneId::new("bravo")]);
        assert_eq!(o.log.len(), 1);
        assert_eq!(o.log[0].kind, PlanLogKind::Dispatch);
        assert_eq!(o.log[0].deadline_tick, Some(9 + plan.deadline_ticks));
    }

    #[test]
    fn repeat_reports_inside_the_horizon_are_deduplicated() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        let m = msg("alpha", "bravo", RULE_MIN_SEPARATION, CausalCause::CoordinationFailure);
        assert!(o.receive_report(9, &m, &rules).is_some());
        assert!(o.receive_report(19, &m, &rules).is_none(), "within the 100-tick horizon");
        assert!(o.receive_report(109, &m, &rules).is_none(), "boundary is inclusive");
        assert!(o.receive_report(110, &m, &rules).is_some(), "horizon expired");
        // A different rule for the same subject dispatches independently.
        let other = msg("alpha", "bravo", "max_speed", CausalCause::InternalFault);
        assert!(o.receive_report(10, &other, &rules).is_some());
    }

    #[test]
    fn unknown_subjects_are_rejected_with_a_log_entry() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha"]);
        let m = msg("alpha", "ghost", RULE_MIN_SEPARATION, CausalCause::CoordinationFailure);
        assert!(o.receive_report(9, &m, &rules).is_none());
        assert_eq!(o.log.len(), 1);
        assert_eq!(o.log[0].kind, PlanLogKind::RejectedUnknown);
        assert_eq!(o.log[0].subject, DroneId::new("ghost"));
    }

    #[test]
    fn separation_deadline_recovers_when_the_pair_is_far_apart() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        let m = msg("alpha", "bravo", RULE_MIN_SEPARATION, CausalCause::CoordinationFailure);
        o.receive_report(9, &m, &rules).unwrap();
        let mut positions = BTreeMap::new();
        positions.insert(DroneId::new("alpha"), Vec3::ZERO);
        positions.insert(DroneId::new("bravo"), Vec3::new(60.0, 0.0, 0.0));
        assert!(o.check_deadlines(18, &positions, false, &rules).is_empty(), "not due yet");
        let escalations = o.check_deadlines(19, &positions, false, &rules);
        assert!(escalations.is_empty());
        assert_eq!(o.log.last().unwrap().kind, PlanLogKind::Recovered);
    }

    #[test]
    fn failed_separation_recovery_escalates_to_a_stop_order() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        let m = msg("alpha", "bravo", RULE_MIN_SEPARATION, CausalCause::CoordinationFailure);
        o.receive_report(9, &m, &rules).unwrap();
        let mut positions = BTreeMap::new();
        positions.insert(DroneId::new("alpha"), Vec3::ZERO);
        positions.insert(DroneId::new("bravo"), Vec3::new(30.0, 0.0, 0.0));
        let escalations = o.check_deadlines(19, &positions, false, &rules);
        assert_eq!(escalations.len(), 1);
        let (plan, targets) = &escalations[0];
        assert!(plan.actions.contains(&Countermeasure::Stop));
        assert_eq!(targets, &vec![DroneId::new("bravo")]);
        let kinds: Vec<_> = o.log.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![PlanLogKind::Dispatch, PlanLogKind::RecoveryFailed, PlanLogKind::Escalation]
        );
        // Already settled: later checks do nothing.
        assert!(o.check_deadlines(19, &positions, false, &rules).is_empty());
    }

    #[test]
    fn non_separation_rules_recover_by_report_silence() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        let m = msg("alpha", "bravo", "max_speed", CausalCause::InternalFault);
        o.receive_report(9, &m, &rules).unwrap();
        let positions = BTreeMap::new();
        // No further reports: recovered at the deadline.
        assert!(o.check_deadlines(19, &positions, false, &rules).is_empty());
        assert_eq!(o.log.last().unwrap().kind, PlanLogKind::Recovered);

        // Second run, but a fresh report lands before the deadline.
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        o.receive_report(9, &m, &rules).unwrap();
        o.receive_report(15, &m, &rules); // deduped, but still recorded
        let escalations = o.check_deadlines(19, &positions, false, &rules);
        assert_eq!(escalations.len(), 1, "renewed report means the fault persists");
    }

    #[test]
    fn weather_widens_the_recovery_distance() {
        let rules = SafetyRuleSet::bundled_default();
        let mut o = orchestrator_with(&["alpha", "bravo"]);
        let m = msg("alpha", "bravo", RULE_WEATHER_SEPARATION, CausalCause::EnvironmentInfluence);
        o.receive_report(9, &m, &rules).unwrap();
        let mut positions = BTreeMap::new();
        positions.insert(DroneId::new("alpha"), Vec3::ZERO);
        // 50 m would satisfy the base floor but not the widened one.
        positions.insert(DroneId::new("bravo"), Vec3::new(50.0, 0.0, 0.0));
        let escalations = o.check_deadlines(19, &positions, true, &rules);
        assert_eq!(escalations.len(), 1);
    }
}
