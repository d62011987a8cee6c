//! The simulation loop: kinematics, telemetry, windowed compliance
//! assessment, trust updates, gossip, and orchestrated recovery.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compliance::{assess, window_verdict, ComplianceVerdict, TelemetryRecord, Trace};
use crate::dt_model::DroneId;
use crate::geom::Vec3;
use crate::safety::{
    CausalCause, Countermeasure, SafetyRuleSet, ViolationRef, RULE_MIN_SEPARATION,
    RULE_WEATHER_SEPARATION,
};
use crate::trust::{decide, Decision, LedgerExport};

use super::agent::{DroneAgent, EnvTick, KinematicLimits, Snapshot};
use super::orchestrator::{Orchestrator, PlanLogEntry, ViolationReportMsg};
use super::scenario::Scenario;
use super::SimError;

/// Sideways displacement applied when a recovery plan says to reroute.
const REROUTE_SHIFT_M: f64 = 40.0;

/// One row of the trust time series: how much `trustor` trusts `trustee`
/// at the end of an evaluation window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustSeriesRow {
    pub window_end_tick: u64,
    pub trustor: DroneId,
    pub trustee: DroneId,
    pub direct: f64,
    pub indirect: f64,
    pub combined: f64,
    pub decision: Decision,
}

/// Everything a finished run produces, ready for serialization.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub scenario: Scenario,
    /// Full telemetry per drone, one record per tick.
    pub traces: BTreeMap<DroneId, Vec<TelemetryRecord>>,
    /// Whole-run compliance verdict per assessed drone. Verdicts are
    /// observer-independent (everyone sees the same telemetry and holds the
    /// same behaviour document), so one per subject suffices.
    pub verdicts: BTreeMap<DroneId, ComplianceVerdict>,
    /// Who holds whose behaviour document: observer → subjects it can
    /// assess. Drones that refused the exchange appear nowhere.
    pub observers: BTreeMap<DroneId, BTreeSet<DroneId>>,
    /// The behaviour documents that were actually exchanged.
    pub twins: BTreeMap<DroneId, crate::dt_model::DigitalTwin>,
    pub ledgers: BTreeMap<DroneId, LedgerExport>,
    pub series: Vec<TrustSeriesRow>,
    pub plans: Vec<PlanLogEntry>,
    /// Final trust decision of every drone about every other drone.
    pub final_decisions: BTreeMap<DroneId, BTreeMap<DroneId, Decision>>,
    /// Countermeasures still in force at the end of the run: observer →
    /// untrusted subject → actions taken against it.
    pub countermeasures: BTreeMap<DroneId, BTreeMap<DroneId, Vec<Countermeasure>>>,
}

/// The most frequent rule implicated in a window's violations, with the
/// causal bucket recovery planning expects. Ties break lexicographically;
/// a clean window yields `None`.
pub(super) fn dominant_violation(verdict: &ComplianceVerdict) -> Option<ViolationRef> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in &verdict.per_tick {
        if !t.status.is_violation() {
            continue;
        }
        let key = match &t.rule_id {
            Some(rule) => rule.as_str(),
            None => match t.status {
                crate::compliance::TickStatus::StateViolation => "state_conformance",
                crate::compliance::TickStatus::PredictionViolation => "prediction_conformance",
                _ => "physics",
            },
        };
        *counts.entry(key).or_insert(0) += 1;
    }
    let (rule_id, _) = counts.into_iter().max_by_key(|&(rule, n)| (n, std::cmp::Reverse(rule)))?;
    let cause = match rule_id {
        RULE_MIN_SEPARATION => CausalCause::CoordinationFailure,
        RULE_WEATHER_SEPARATION => CausalCause::EnvironmentInfluence,
        _ => CausalCause::InternalFault,
    };
    Some(ViolationRef { rule_id: rule_id.to_string(), cause })
}

/// Positions of everyone except `subject`, keyed by tick, as the physics
/// checks expect.
fn peer_positions_for(
    subject: &DroneId,
    traces: &BTreeMap<DroneId, Vec<TelemetryRecord>>,
) -> BTreeMap<u64, Vec<Vec3>> {
    let mut map: BTreeMap<u64, Vec<Vec3>> = BTreeMap::new();
    for (id, records) in traces {
        if id == subject {
            continue;
        }
        for r in records {
            map.entry(r.tick).or_default().push(r.pos);
        }
    }
    map
}

fn assess_full(
    agent_twins: &BTreeMap<DroneId, crate::dt_model::DigitalTwin>,
    subject: &DroneId,
    traces: &BTreeMap<DroneId, Vec<TelemetryRecord>>,
    rules: &SafetyRuleSet,
    scenario: &Scenario,
) -> ComplianceVerdict {
    let twin = &agent_twins[subject];
    let records = traces[subject].clone();
    let trace = Trace::new(subject.clone(), records).expect("runner traces are well-formed");
    let peers = peer_positions_for(subject, traces);
    assess(twin, &trace, rules, &peers, &scenario.compliance)
        .expect("assessed twin and trace share one drone id")
}

/// Run a validated scenario to completion.
pub fn run_scenario(
    scenario: &Scenario,
    rules: &SafetyRuleSet,
) -> Result<SimulationResult, SimError> {
    let problems = scenario.validate();
    if !problems.is_empty() {
        return Err(SimError::Invalid { problems });
    }

    let mut agents: BTreeMap<DroneId, DroneAgent> = scenario
        .drones
        .iter()
        .map(|cfg| (cfg.id.clone(), DroneAgent::new(cfg, &scenario.trust)))
        .collect();
    let ids: Vec<DroneId> = agents.keys().cloned().collect();
    let limits = KinematicLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut orchestrator =
        scenario.orchestrator.enabled.then(|| Orchestrator::new(rules.numeric().report_period_ticks));

    // Behaviour-document exchange before flight. A drone scripted silent
    // from the very start refuses: it neither gives nor takes documents,
    // and every counterparty books the refusal as an opaque encounter.
    let shared: BTreeSet<DroneId> =
        ids.iter().filter(|id| !agents[*id].silent_at(0)).cloned().collect();
    for a in &ids {
        for b in &ids {
            if a == b {
                continue;
            }
            if shared.contains(a) && shared.contains(b) {
                let twin = agents[b].twin.clone();
                agents.get_mut(a).unwrap().registry.insert(b.clone(), twin);
            } else {
                agents.get_mut(a).unwrap().ledger.record_opaque_window(b);
            }
        }
    }
    if let Some(orch) = orchestrator.as_mut() {
        for id in &shared {
            orch.register_twin(agents[id].twin.clone());
        }
    }

    let agent_twins: BTreeMap<DroneId, crate::dt_model::DigitalTwin> =
        ids.iter().map(|id| (id.clone(), agents[id].twin.clone())).collect();

    let mut traces: BTreeMap<DroneId, Vec<TelemetryRecord>> =
        ids.iter().map(|id| (id.clone(), Vec::new())).collect();
    let mut series: Vec<TrustSeriesRow> = Vec::new();
    let mut countermeasures: BTreeMap<DroneId, BTreeMap<DroneId, Vec<Countermeasure>>> =
        BTreeMap::new();

    for tick in 0..scenario.ticks {
        if tick > 0 {
            for agent in agents.values_mut() {
                agent.integrate();
            }
        }
        let snapshot: Snapshot =
            agents.values().map(|a| (a.id.clone(), (a.pos, a.vel))).collect();
        let weather = scenario.weather_severe_at(tick);
        let interference = scenario.interference_at(tick);

        for id in &ids {
            let agent = agents.get_mut(id).unwrap();
            let period = u64::from(agent.twin.prediction.broadcast_period_ticks.max(1));
            let broadcast_due = tick % period == 0;
            let broadcast_lost = broadcast_due && rng.gen::<f64>() < scenario.drop_probability;
            let env = EnvTick {
                object: scenario.object_for(id, tick),
                weather,
                interference,
                broadcast_due,
                broadcast_lost,
            };
            let record = agent.step(tick, &env, &snapshot, rules, &limits, scenario.compliance.stop_epsilon);
            traces.get_mut(id).unwrap().push(record);
        }

        let boundary = (tick + 1) % scenario.eval_window_ticks == 0;
        if boundary {
            // Assess every shared drone once over its full history, then
            // score just the closing window. The verdict is the same no
            // matter who looks, so observers share it.
            let window_len = scenario.eval_window_ticks as usize;
            let mut window_verdicts: BTreeMap<DroneId, ComplianceVerdict> = BTreeMap::new();
            for subject in &shared {
                let full = assess_full(&agent_twins, subject, &traces, rules, scenario);
                let records = &traces[subject];
                let start = records.len() - window_len.min(records.len());
                let wv = window_verdict(
                    subject,
                    &full.per_tick[start..],
                    &records[start..],
                    records[0].tick,
                    agent_twins[subject].prediction.broadcast_period_ticks,
                );
                window_verdicts.insert(subject.clone(), wv);
            }
            for observer in &ids {
                for subject in &ids {
                    if observer == subject {
                        continue;
                    }
                    let has_twin = agents[observer].registry.contains_key(subject);
                    let agent = agents.get_mut(observer).unwrap();
                    match window_verdicts.get(subject) {
                        Some(wv) if has_twin => {
                            agent.ledger.record_window(subject, wv);
                        }
                        _ => {
                            agent.ledger.record_opaque_window(subject);
                        }
                    }
                }
            }

            // Gossip: every drone shares its first-hand opinions. Radio
            // interference silences the channel; otherwise each message
            // rolls the lossy-link dice independently.
            if !interference {
                let mut deliveries = Vec::new();
                for reporter in &ids {
                    if agents[reporter].silent_at(tick) {
                        continue;
                    }
                    for subject in &ids {
                        if subject == reporter {
                            continue;
                        }
                        let Ok(report) = agents[reporter].ledger.publish_report(subject, tick)
                        else {
                            continue;
                        };
                        for receiver in &ids {
                            if receiver == reporter {
                                continue;
                            }
                            if rng.gen::<f64>() < scenario.drop_probability {
                                continue;
                            }
                            deliveries.push((receiver.clone(), report.clone()));
                        }
                    }
                }
                for (receiver, report) in deliveries {
                    agents
                        .get_mut(&receiver)
                        .unwrap()
                        .ledger
                        .ingest_report(report)
                        .expect("published reports are valid and never self-vouching");
                }
            }

            for agent in agents.values_mut() {
                agent.ledger.recompute(tick);
            }

            // Trust decisions drive countermeasures against untrusted peers.
            let tau = scenario.trust.threshold;
            for observer in &ids {
                for subject in &ids {
                    if observer == subject {
                        continue;
                    }
                    let decision = agents[observer].ledger.decision(subject);
                    if decision == Decision::Untrusted {
                        let combined = agents[observer].ledger.combined(subject);
                        let dominant =
                            window_verdicts.get(subject).and_then(dominant_violation);
                        let td = decide(combined, tau, dominant.as_ref(), rules);
                        countermeasures
                            .entry(observer.clone())
                            .or_default()
                            .insert(subject.clone(), td.countermeasures.clone());
                        agents
                            .get_mut(observer)
                            .unwrap()
                            .set_counters(subject, td.countermeasures);
                    } else {
                        if let Some(held) = countermeasures.get_mut(observer) {
                            held.remove(subject);
                        }
                        agents.get_mut(observer).unwrap().clear_counters(subject);
                    }
                }
            }

            // Violating windows go to the orchestrator, over the same lossy,
            // interference-prone channel.
            if let Some(orch) = orchestrator.as_mut() {
                if !interference {
                    for reporter in &ids {
                        if agents[reporter].silent_at(tick) {
                            continue;
                        }
                        for subject in &ids {
                            if subject == reporter
                                || !agents[reporter].registry.contains_key(subject)
                            {
                                continue;
                            }
                            let Some(wv) = window_verdicts.get(subject) else { continue };
                            let Some(dominant) = dominant_violation(wv) else { continue };
                            if rng.gen::<f64>() < scenario.drop_probability {
                                continue;
                            }
                            let first_violation_tick = wv
                                .per_tick
                                .iter()
                                .find(|t| t.status.is_violation())
                                .map(|t| t.tick)
                                .expect("a dominant violation implies a violating tick");
                            let msg = ViolationReportMsg {
                                reporter: reporter.clone(),
                                subject: subject.clone(),
                                rule_id: dominant.rule_id.clone(),
                                cause: dominant.cause,
                                first_violation_tick,
                                window_end_tick: tick,
                            };
                            if let Some((plan, targets)) = orch.receive_report(tick, &msg, rules)
                            {
                                for target in &targets {
                                    let counterpart = if *target == msg.subject {
                                        &msg.reporter
                                    } else {
                                        &msg.subject
                                    };
                                    if let Some(agent) = agents.get_mut(target) {
                                        agent.apply_plan(
                                            &plan.actions,
                                            Some(counterpart),
                                            tick,
                                            REROUTE_SHIFT_M,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }

            for trustor in &ids {
                for trustee in &ids {
                    if trustor == trustee {
                        continue;
                    }
                    let subject = agents[trustor]
                        .ledger
                        .subject(trustee)
                        .expect("every peer is scored at every boundary");
                    series.push(TrustSeriesRow {
                        window_end_tick: tick,
                        trustor: trustor.clone(),
                        trustee: trustee.clone(),
                        direct: subject.direct,
                        indirect: subject.indirect,
                        combined: subject.combined,
                        decision: subject.decision,
                    });
                }
            }
        }

        if let Some(orch) = orchestrator.as_mut() {
            let positions: BTreeMap<DroneId, Vec3> =
                snapshot.iter().map(|(id, (pos, _))| (id.clone(), *pos)).collect();
            for (plan, targets) in orch.check_deadlines(tick, &positions, weather, rules) {
                for target in &targets {
                    if let Some(agent) = agents.get_mut(target) {
                        agent.apply_plan(&plan.actions, None, tick, REROUTE_SHIFT_M);
                    }
                }
            }
        }
    }

    let mut verdicts = BTreeMap::new();
    if scenario.ticks > 0 {
        for subject in &shared {
            verdicts.insert(
                subject.clone(),
                assess_full(&agent_twins, subject, &traces, rules, scenario),
            );
        }
    }

    let observers: BTreeMap<DroneId, BTreeSet<DroneId>> = ids
        .iter()
        .filter_map(|id| {
            let subjects: BTreeSet<DroneId> = agents[id].registry.keys().cloned().collect();
            (!subjects.is_empty()).then(|| (id.clone(), subjects))
        })
        .collect();

    let ledgers: BTreeMap<DroneId, LedgerExport> =
        ids.iter().map(|id| (id.clone(), agents[id].ledger.export())).collect();

    let final_decisions: BTreeMap<DroneId, BTreeMap<DroneId, Decision>> = ids
        .iter()
        .map(|trustor| {
            let row = ids
                .iter()
                .filter(|trustee| *trustee != trustor)
                .map(|trustee| (trustee.clone(), agents[trustor].ledger.decision(trustee)))
                .collect();
            (trustor.clone(), row)
        })
        .collect();

    let twins: BTreeMap<DroneId, crate::dt_model::DigitalTwin> = shared
        .iter()
        .map(|id| (id.clone(), agent_twins[id].clone()))
        .collect();

    Ok(SimulationResult {
        scenario: scenario.clone(),
        traces,
        verdicts,
        observers,
        twins,
        ledgers,
        series,
        plans: orchestrator.map_or_else(Vec::new, |o| o.log),
        final_decisions,
        countermeasures,
    })
}
