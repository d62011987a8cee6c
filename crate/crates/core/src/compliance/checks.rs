//! The three compliance dimensions and their merged assessment.

use super::{
    ComplianceConfig, ComplianceError, ComplianceVerdict, TelemetryRecord, TickStatus,
    TickVerdict, Trace,
};
use crate::dt_model::{DigitalTwin, DroneId, StateCategory, StateId};
use crate::geom::Vec3;
use crate::safety::{
    classify_uca, SafetyRuleSet, UcaType, RULE_MAX_SPEED, RULE_MIN_SEPARATION,
    RULE_WEATHER_SEPARATION,
};
use std::collections::{BTreeMap, BTreeSet};

/// Slack added to the declared top speed so that floating-point drift in an
/// otherwise exact cruise does not register as a violation.
const SPEED_SLACK: f64 = 1e-9;

fn ensure_same_drone(twin: &DigitalTwin, trace: &Trace) -> Result<(), ComplianceError> {
    if twin.drone_id != *trace.drone_id() {
        return Err(ComplianceError::IdMismatch {
            twin: twin.drone_id.clone(),
            trace: trace.drone_id().clone(),
        });
    }
    Ok(())
}

/// Per-tick outcome of declared-state checking.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTickOutcome {
    pub tick: u64,
    /// `Conforming`, `Undeclared`, or `StateViolation`.
    pub status: TickStatus,
    /// On a violation, a state that would have conformed.
    pub expected: Option<StateId>,
}

/// Check that the sequence of declared states walks the declared machine.
///
/// A tick conforms when its declared state is a target of some transition
/// out of the previously declared state whose trigger fired this tick, or
/// equals the previous state when no transition-relevant trigger fired
/// (dwelling). The first declared tick must be the machine's initial state
/// or its `power_on` successor. Undeclared ticks are reported as such and
/// leave the reference state untouched; after a violation the reference
/// state resynchronises to whatever was declared.
pub fn check_state_conformance(
    twin: &DigitalTwin,
    trace: &Trace,
) -> Result<Vec<StateTickOutcome>, ComplianceError> {
    ensure_same_drone(twin, trace)?;
    let fsm = &twin.fsm;
    let mut out = Vec::with_capacity(trace.len());
    let mut prev: Option<StateId> = None;
    for r in trace.records() {
        let Some(declared) = r.declared_state.clone() else {
            out.push(StateTickOutcome {
                tick: r.tick,
                status: TickStatus::Undeclared,
                expected: None,
            });
            continue;
        };
        let (mut ok, mut expected) = match &prev {
            None => {
                let boot_ok = declared == fsm.initial
                    || fsm.transitions.iter().any(|t| {
                        t.from == fsm.initial && t.trigger == "power_on" && t.to == declared
                    });
                (boot_ok, fsm.initial.clone())
            }
            Some(p) => {
                let candidates: BTreeSet<&StateId> = fsm
                    .transitions
                    .iter()
                    .filter(|t| t.from == *p && r.events.contains(&t.trigger))
                    .map(|t| &t.to)
                    .collect();
                match candidates.iter().next() {
                    // No relevant trigger fired: only dwelling conforms.
                    None => (declared == *p, p.clone()),
                    Some(first) => (candidates.contains(&&declared), (*first).clone()),
                }
            }
        };
        if !fsm.has_state(&declared) {
            ok = false;
            if expected == declared {
                expected = fsm.initial.clone();
            }
        }
        out.push(StateTickOutcome {
            tick: r.tick,
            status: if ok { TickStatus::Conforming } else { TickStatus::StateViolation },
            expected: (!ok).then_some(expected),
        });
        prev = Some(declared);
    }
    Ok(out)
}

/// How a tick's physical behaviour contradicted the declared document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhysicsViolationKind {
    /// Closed inside the base separation floor while moving toward the peer.
    Separation,
    /// Inside the widened floor that severe weather imposes.
    WeatherSeparation,
    /// Flew faster than the declared top speed.
    MaxSpeed,
    /// Declared a terminal stop state while still moving.
    NotStopped,
    /// Speed rose while a braking state was declared.
    BrakingTrend,
    /// Speed drifted while the hold-speed state was declared.
    SpeedNotHeld,
    /// Speed failed to rise while the acceleration state was declared.
    NotAccelerating,
    /// Speed failed to fall while the deceleration state was declared.
    NotDecelerating,
}

impl PhysicsViolationKind {
    /// The numeric safety rule this violation cites, when one applies.
    pub fn rule_id(self) -> Option<&'static str> {
        match self {
            PhysicsViolationKind::Separation => Some(RULE_MIN_SEPARATION),
            PhysicsViolationKind::WeatherSeparation => Some(RULE_WEATHER_SEPARATION),
            PhysicsViolationKind::MaxSpeed => Some(RULE_MAX_SPEED),
            _ => None,
        }
    }

    /// The (expected, observed) control-action framing used to classify the
    /// discrepancy: missing expected actions are omissions, unexpected
    /// observed actions are commissions.
    fn action(self) -> (Option<&'static str>, Option<&'static str>) {
        match self {
            PhysicsViolationKind::Separation | PhysicsViolationKind::WeatherSeparation => {
                (Some("maintain_separation"), None)
            }
            PhysicsViolationKind::MaxSpeed => (None, Some("exceed_max_speed")),
            PhysicsViolationKind::NotStopped => (Some("stop"), None),
            PhysicsViolationKind::BrakingTrend | PhysicsViolationKind::NotDecelerating => {
                (Some("decelerate"), None)
            }
            PhysicsViolationKind::SpeedNotHeld => (Some("keep_speed"), None),
            PhysicsViolationKind::NotAccelerating => (Some("accelerate"), None),
        }
    }
}

/// Per-tick outcome of physical-behaviour checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsTickOutcome {
    pub tick: u64,
    /// `Conforming` or `PhysicsViolation`.
    pub status: TickStatus,
    pub kind: Option<PhysicsViolationKind>,
}

/// Speed at which the drone is closing on the given peer position, in
/// metres per tick; negative when receding.
fn closing_speed(record: &TelemetryRecord, peer: Vec3) -> f64 {
    (peer - record.pos).normalized().dot(&record.vel)
}

/// Check observed kinematics against the declared document and the safety
/// rules.
///
/// Two rules hold in every state: speed must stay within the declared top
/// speed, and a drone must not move toward a peer it is already too close
/// to (weather widens the floor; a drone holding position or retreating is
/// not charged for a peer's intrusion). Declared control states add their
/// own semantics: terminal stop states demand rest, braking states forbid
/// speeding up, and the hold/accelerate/decelerate states constrain the
/// speed trend from the second consecutive tick in the state.
pub fn check_physics_conformance(
    twin: &DigitalTwin,
    trace: &Trace,
    rules: &SafetyRuleSet,
    peer_positions: &BTreeMap<u64, Vec<Vec3>>,
    cfg: &ComplianceConfig,
) -> Result<Vec<PhysicsTickOutcome>, ComplianceError> {
    ensure_same_drone(twin, trace)?;
    let numeric = rules.numeric();
    let records = trace.records();
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let weather = r.weather_severe();
        let required = numeric.required_separation_m(weather);
        let mut kind = None;

        if let Some(peers) = peer_positions.get(&r.tick) {
            let mut closest: Option<f64> = None;
            for peer in peers {
                let d = r.pos.distance(peer);
                if d < required && closing_speed(r, *peer) > cfg.stop_epsilon {
                    closest = Some(closest.map_or(d, |c| c.min(d)));
                }
            }
            if let Some(d) = closest {
                kind = Some(if weather && d >= numeric.min_separation_m {
                    PhysicsViolationKind::WeatherSeparation
                } else {
                    PhysicsViolationKind::Separation
                });
            }
        }
        if kind.is_none() && r.speed() > twin.attrs.max_speed_mps + SPEED_SLACK {
            kind = Some(PhysicsViolationKind::MaxSpeed);
        }
        if kind.is_none() {
            kind = state_semantics_violation(twin, records, i, cfg);
        }
        out.push(PhysicsTickOutcome {
            tick: r.tick,
            status: if kind.is_some() {
                TickStatus::PhysicsViolation
            } else {
                TickStatus::Conforming
            },
            kind,
        });
    }
    Ok(out)
}

fn state_semantics_violation(
    twin: &DigitalTwin,
    records: &[TelemetryRecord],
    i: usize,
    cfg: &ComplianceConfig,
) -> Option<PhysicsViolationKind> {
    let r = &records[i];
    let declared = r.declared_state.as_ref()?;
    let state = twin.fsm.state(declared)?;
    let speed = r.speed();

    if state.category == StateCategory::Braking && twin.fsm.terminal.contains(declared) {
        return (speed > cfg.stop_epsilon).then_some(PhysicsViolationKind::NotStopped);
    }
    if i == 0 {
        return None;
    }
    let prev = &records[i - 1];
    let prev_speed = prev.speed();

    if state.category == StateCategory::Braking {
        let prev_braking = prev
            .declared_state
            .as_ref()
            .and_then(|p| twin.fsm.state(p))
            .is_some_and(|s| s.category == StateCategory::Braking);
        return (prev_braking && speed > prev_speed + cfg.speed_epsilon)
            .then_some(PhysicsViolationKind::BrakingTrend);
    }
    // Trend states are judged from the second consecutive tick in the
    // state; the entry tick still carries the previous regime's speed.
    if prev.declared_state.as_ref() != Some(declared) {
        return None;
    }
    match declared.as_str() {
        "S21" if (speed - prev_speed).abs() > cfg.speed_epsilon => {
            Some(PhysicsViolationKind::SpeedNotHeld)
        }
        "S22" if speed <= prev_speed + cfg.speed_epsilon => {
            Some(PhysicsViolationKind::NotAccelerating)
        }
        "S23" if speed >= prev_speed - cfg.speed_epsilon => {
            Some(PhysicsViolationKind::NotDecelerating)
        }
        _ => None,
    }
}

/// Per-tick outcome of broadcast-trajectory checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionTickOutcome {
    pub tick: u64,
    /// `Conforming` or `PredictionViolation`.
    pub status: TickStatus,
    /// Largest broken-prediction deviation targeting this tick, in metres.
    pub deviation_m: Option<f64>,
}

/// Check actual positions against previously broadcast future locations.
///
/// A broadcast from tick `t` predicting tick `t + k` holds the drone to
/// within `epsilon_m` of the predicted point, attributed to tick `t + k`.
/// A declared-state change announces a new flight regime and voids the
/// still-outstanding part of every *older* broadcast from the change tick
/// onward — a drone that announces a manoeuvre is not bound by trajectory
/// promises made before it. Predictions beyond the end of the trace are
/// checked only where records exist.
pub fn check_prediction_conformance(trace: &Trace, epsilon_m: f64) -> Vec<PredictionTickOutcome> {
    let records = trace.records();
    let change_ticks: Vec<u64> = records
        .windows(2)
        .filter(|w| w[1].declared_state != w[0].declared_state)
        .map(|w| w[1].tick)
        .collect();
    let index_by_tick: BTreeMap<u64, usize> =
        records.iter().enumerate().map(|(i, r)| (r.tick, i)).collect();
    let mut deviation: Vec<Option<f64>> = vec![None; records.len()];
    for r in records {
        let Some(futures) = &r.broadcast_futures else { continue };
        let void_from = change_ticks.iter().copied().find(|&u| u > r.tick);
        for point in futures {
            if point.tick <= r.tick {
                continue;
            }
            if void_from.is_some_and(|u| point.tick >= u) {
                continue;
            }
            let Some(&i) = index_by_tick.get(&point.tick) else { continue };
            let d = records[i].pos.distance(&point.pos);
            if d > epsilon_m {
                let slot = &mut deviation[i];
                *slot = Some(slot.map_or(d, |w| w.max(d)));
            }
        }
    }
    records
        .iter()
        .zip(deviation)
        .map(|(r, deviation_m)| PredictionTickOutcome {
            tick: r.tick,
            status: if deviation_m.is_some() {
                TickStatus::PredictionViolation
            } else {
                TickStatus::Conforming
            },
            deviation_m,
        })
        .collect()
}

fn classify(
    expected: Option<(&str, i64)>,
    observed: Option<(&str, i64)>,
    rules: &SafetyRuleSet,
) -> Option<UcaType> {
    classify_uca(expected, observed, rules).ok().flatten()
}

/// Run all three dimensions and merge them into one verdict.
///
/// Each tick keeps the worst of its three statuses; violating and
/// undeclared ticks are classified as control-action discrepancies.
/// Honesty is the conforming fraction of declared ticks (zero, flagged,
/// when nothing was declared); openness is the declared fraction of all
/// ticks scaled by how reliably due broadcasts were sent.
pub fn assess(
    twin: &DigitalTwin,
    trace: &Trace,
    rules: &SafetyRuleSet,
    peer_positions: &BTreeMap<u64, Vec<Vec3>>,
    cfg: &ComplianceConfig,
) -> Result<ComplianceVerdict, ComplianceError> {
    let state = check_state_conformance(twin, trace)?;
    let physics = check_physics_conformance(twin, trace, rules, peer_positions, cfg)?;
    let prediction = check_prediction_conformance(trace, cfg.prediction_epsilon_m);

    let records = trace.records();
    let mut per_tick = Vec::with_capacity(records.len());
    for i in 0..records.len() {
        let r = &records[i];
        let tick = r.tick as i64;
        let status = state[i].status.max(physics[i].status).max(prediction[i].status);
        let (uca_type, rule_id) = match status {
            TickStatus::Conforming => (None, None),
            TickStatus::Undeclared => {
                (classify(Some(("declare_state", tick)), None, rules), None)
            }
            TickStatus::StateViolation => {
                let expected =
                    state[i].expected.as_ref().map(StateId::as_str).unwrap_or_default();
                let declared =
                    r.declared_state.as_ref().map(StateId::as_str).unwrap_or_default();
                (
                    classify(Some((expected, tick)), Some((declared, tick)), rules),
                    None,
                )
            }
            TickStatus::PhysicsViolation => {
                let kind = physics[i].kind.expect("a physics violation carries its kind");
                let (exp, obs) = kind.action();
                (
                    classify(exp.map(|a| (a, tick)), obs.map(|a| (a, tick)), rules),
                    kind.rule_id().map(str::to_owned),
                )
            }
            TickStatus::PredictionViolation => (
                classify(None, Some(("deviate_from_broadcast", tick)), rules),
                None,
            ),
        };
        per_tick.push(TickVerdict { tick: r.tick, status, uca_type, rule_id });
    }

    Ok(window_verdict(
        trace.drone_id(),
        &per_tick,
        records,
        trace.first_tick().unwrap_or(0),
        twin.prediction.broadcast_period_ticks,
    ))
}

/// Assemble a standalone verdict for an aligned span of an assessment —
/// typically one evaluation window of a longer trace. `trace_first_tick`
/// must be the first tick of the *whole* trace so the broadcast schedule
/// stays anchored.
pub fn window_verdict(
    drone_id: &DroneId,
    per_tick: &[TickVerdict],
    records: &[TelemetryRecord],
    trace_first_tick: u64,
    broadcast_period_ticks: u32,
) -> ComplianceVerdict {
    let stats = slice_stats(per_tick, records, trace_first_tick, broadcast_period_ticks);
    let mut summary = BTreeMap::new();
    for t in per_tick {
        *summary.entry(t.status).or_insert(0u64) += 1;
    }
    ComplianceVerdict {
        drone_id: drone_id.clone(),
        per_tick: per_tick.to_vec(),
        honesty: stats.honesty,
        openness: stats.openness,
        no_declaration: stats.no_declaration,
        summary,
    }
}

/// Honesty/openness statistics for a span of aligned verdicts and records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub ticks: u64,
    pub declared_ticks: u64,
    pub conforming_ticks: u64,
    /// Conforming ticks over declared ticks (0 when nothing was declared).
    pub honesty: f64,
    /// Declared fraction of all ticks times broadcast adherence.
    pub openness: f64,
    pub no_declaration: bool,
    pub physics_or_state_violations: u64,
    pub prediction_violations: u64,
}

/// Compute the scalar metrics for a slice of a trace. The same arithmetic
/// scores both whole traces and evaluation windows; broadcast due-ness is
/// anchored to the trace's first tick so that slicing never shifts the
/// schedule.
pub fn slice_stats(
    per_tick: &[TickVerdict],
    records: &[TelemetryRecord],
    trace_first_tick: u64,
    broadcast_period_ticks: u32,
) -> WindowStats {
    assert_eq!(per_tick.len(), records.len(), "verdicts and records must align");
    let ticks = records.len() as u64;
    let declared_ticks =
        records.iter().filter(|r| r.declared_state.is_some()).count() as u64;
    let conforming_ticks =
        per_tick.iter().filter(|t| t.status == TickStatus::Conforming).count() as u64;
    let physics_or_state_violations = per_tick
        .iter()
        .filter(|t| {
            matches!(t.status, TickStatus::PhysicsViolation | TickStatus::StateViolation)
        })
        .count() as u64;
    let prediction_violations = per_tick
        .iter()
        .filter(|t| t.status == TickStatus::PredictionViolation)
        .count() as u64;

    let honesty = if declared_ticks == 0 {
        0.0
    } else {
        conforming_ticks as f64 / declared_ticks as f64
    };

    let period = u64::from(broadcast_period_ticks.max(1));
    let mut due = 0u64;
    let mut sent = 0u64;
    for r in records {
        let is_due = r
            .tick
            .checked_sub(trace_first_tick)
            .is_some_and(|offset| offset % period == 0);
        if is_due {
            due += 1;
            if r.broadcast_futures.is_some() {
                sent += 1;
            }
        }
    }
    let adherence = if due == 0 { 1.0 } else { sent as f64 / due as f64 };
    let declared_fraction =
        if ticks == 0 { 0.0 } else { declared_ticks as f64 / ticks as f64 };

    WindowStats {
        ticks,
        declared_ticks,
        conforming_ticks,
        honesty,
        openness: declared_fraction * adherence,
        no_declaration: declared_ticks == 0,
        physics_or_state_violations,
        prediction_violations,
    }
}
