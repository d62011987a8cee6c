//! The per-drone autopilot: mission following, protocol walks through the
//! control state machine, reactions to weather, obstacles, nearby traffic,
//! countermeasures, and scripted deviations.

use std::collections::{BTreeMap, BTreeSet};

use crate::compliance::{
    PredictedPoint, TelemetryRecord, EVENT_SIGNAL_INTERFERENCE, EVENT_WEATHER_SEVERE,
};
use crate::dt_model::{canonical_twin, predict_trajectory, DigitalTwin, DroneId, StateId};
use crate::geom::Vec3;
use crate::safety::{Countermeasure, SafetyRuleSet};
use crate::trust::{TrustConfig, TrustLedger};

use super::scenario::{DeviationKind, DeviationWindow, DroneConfig};

/// Flight-envelope limits the autopilot honours in normal operation.
/// Emergency avoidance deliberately ignores both: a drone fleeing a
/// separation conflict snaps straight to its escape velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicLimits {
    /// Largest velocity change per tick (m/tick²).
    pub accel_per_tick: f64,
    /// Largest heading change per tick, in degrees.
    pub turn_limit_deg: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        KinematicLimits { accel_per_tick: 2.0, turn_limit_deg: 15.0 }
    }
}

/// One integration step: position advances with the current velocity, then
/// the velocity integrates the commanded acceleration, clamped to the speed
/// ceiling.
pub fn step_kinematics(pos: Vec3, vel: Vec3, acc: Vec3, max_speed: f64) -> (Vec3, Vec3) {
    (pos + vel, (vel + acc).clamp_norm(max_speed))
}

/// Rotate `current` toward `desired` by at most `max_deg` degrees, staying
/// in the plane the two directions span. Returns a unit vector (or `desired`
/// normalized when `current` has no direction).
fn rotate_toward(current: Vec3, desired: Vec3, max_deg: f64) -> Vec3 {
    let c = current.normalized();
    let d = desired.normalized();
    if c == Vec3::ZERO {
        return d;
    }
    if d == Vec3::ZERO {
        return c;
    }
    let dot = c.dot(&d).clamp(-1.0, 1.0);
    let angle = dot.acos();
    let max = max_deg.to_radians();
    if angle <= max {
        return d;
    }
    let mut perp = (d - c * dot).normalized();
    if perp == Vec3::ZERO {
        // Directly opposed: turn through a horizontal side step, or pitch if
        // the heading is vertical.
        perp = Vec3::new(-c.y, c.x, 0.0).normalized();
        if perp == Vec3::ZERO {
            perp = Vec3::new(1.0, 0.0, 0.0);
        }
    }
    c * max.cos() + perp * max.sin()
}

/// World context the runner hands each agent every tick.
#[derive(Debug, Clone, Copy, Default)]
pub(super) struct EnvTick {
    pub object: bool,
    pub weather: bool,
    pub interference: bool,
    /// The broadcast grid says a future-location broadcast is owed this tick.
    pub broadcast_due: bool,
    /// The link dropped this tick's broadcast (lossy-channel model).
    pub broadcast_lost: bool,
}

/// Positions and velocities of every drone at the start of the tick.
pub(super) type Snapshot = BTreeMap<DroneId, (Vec3, Vec3)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Cruise,
    ObjectAvoid { in_s6: bool },
    Yield { leaving: bool },
    Stopping { braked: bool, leaving: bool, forever: bool },
}

fn st(id: &str) -> StateId {
    StateId::new(id)
}

pub(super) struct DroneAgent {
    pub id: DroneId,
    pub twin: DigitalTwin,
    pub pos: Vec3,
    pub vel: Vec3,
    pub state: StateId,
    pub ledger: TrustLedger,
    /// Twins received at exchange, keyed by peer.
    pub registry: BTreeMap<DroneId, DigitalTwin>,
    cruise_speed: f64,
    mission: Vec<Vec3>,
    waypoint: usize,
    mode: Mode,
    deviation: Vec<DeviationWindow>,
    /// Ledger-driven countermeasures per untrusted peer, refreshed at every
    /// evaluation window.
    counters: BTreeMap<DroneId, Vec<Countermeasure>>,
    /// Peers a dispatched recovery plan told this drone to avoid.
    plan_avoid: BTreeSet<DroneId>,
    plan_minimize: bool,
    stop_ordered: bool,
    lateral_offset: Vec3,
    /// The first tick rests in the initial state; the walk starts after it.
    booted: bool,
}

impl DroneAgent {
    pub(super) fn new(config: &DroneConfig, trust: &TrustConfig) -> Self {
        let mut twin = canonical_twin(config.id.clone());
        if let Some(v) = config.max_speed_mps {
            twin.attrs.max_speed_mps = v;
        }
        if let Some(v) = config.weight_kg {
            twin.attrs.weight_kg = v;
        }
        if let Some(v) = config.comm_ratio {
            twin.attrs.comm_ratio = v;
        }
        let mission = config.mission.clone().unwrap_or_else(|| {
            vec![config.start_pos, config.start_pos + Vec3::new(10_000.0, 0.0, 0.0)]
        });
        twin.mission = mission.clone();
        let ledger = TrustLedger::new(config.id.clone(), trust.clone())
            .expect("trust settings were validated with the scenario");
        DroneAgent {
            id: config.id.clone(),
            twin,
            pos: config.start_pos,
            vel: config.initial_vel.unwrap_or(Vec3::ZERO),
            state: st("S1"),
            ledger,
            registry: BTreeMap::new(),
            cruise_speed: config.cruise_speed_mps,
            mission,
            waypoint: 0,
            mode: Mode::Cruise,
            deviation: config.deviation.clone(),
            counters: BTreeMap::new(),
            plan_avoid: BTreeSet::new(),
            plan_minimize: false,
            stop_ordered: false,
            lateral_offset: Vec3::ZERO,
            booted: false,
        }
    }

    fn active_kinds(&self, tick: u64) -> impl Iterator<Item = &DeviationKind> {
        self.deviation.iter().filter(move |w| w.active_at(tick)).map(|w| &w.kind)
    }

    pub(super) fn silent_at(&self, tick: u64) -> bool {
        self.active_kinds(tick).any(|k| matches!(k, DeviationKind::Silent))
    }

    /// A drone mid-deviation does not cooperate with recovery plans.
    pub(super) fn deviating_at(&self, tick: u64) -> bool {
        self.active_kinds(tick).next().is_some()
    }

    fn ignoring_separation_at(&self, tick: u64) -> bool {
        self.active_kinds(tick)
            .any(|k| matches!(k, DeviationKind::IgnoreSeparation))
    }

    fn wrong_state_at(&self, tick: u64) -> Option<StateId> {
        self.active_kinds(tick).find_map(|k| match k {
            DeviationKind::WrongState { state } => Some(state.clone()),
            _ => None,
        })
    }

    fn burst_at(&self, tick: u64) -> Option<f64> {
        self.active_kinds(tick).find_map(|k| match k {
            DeviationKind::SpeedBurst { speed_mps } => Some(*speed_mps),
            _ => None,
        })
    }

    fn false_prediction_at(&self, tick: u64) -> Option<f64> {
        self.active_kinds(tick).find_map(|k| match k {
            DeviationKind::FalsePrediction { offset_m } => Some(*offset_m),
            _ => None,
        })
    }

    pub(super) fn set_counters(&mut self, subject: &DroneId, actions: Vec<Countermeasure>) {
        if actions.is_empty() {
            self.counters.remove(subject);
        } else {
            self.counters.insert(subject.clone(), actions);
        }
    }

    pub(super) fn clear_counters(&mut self, subject: &DroneId) {
        self.counters.remove(subject);
    }

    /// Adopt a dispatched recovery plan. `counterpart` is the other drone in
    /// the reported conflict, the one avoidance is relative to. Deviating
    /// drones ignore plans entirely.
    pub(super) fn apply_plan(
        &mut self,
        actions: &[Countermeasure],
        counterpart: Option<&DroneId>,
        tick: u64,
        lateral_shift_m: f64,
    ) {
        if self.deviating_at(tick) {
            return;
        }
        for action in actions {
            match action {
                Countermeasure::Avoid => {
                    if let Some(c) = counterpart {
                        if *c != self.id {
                            self.plan_avoid.insert(c.clone());
                        }
                    }
                }
                Countermeasure::MinimizeSpeed => self.plan_minimize = true,
                Countermeasure::Stop => self.stop_ordered = true,
                Countermeasure::Reroute => {
                    // Crude reroute: displace the remaining track sideways.
                    let heading = if self.vel.horizontal() == Vec3::ZERO {
                        Vec3::new(1.0, 0.0, 0.0)
                    } else {
                        self.vel.horizontal().normalized()
                    };
                    self.lateral_offset += Vec3::new(-heading.y, heading.x, 0.0) * lateral_shift_m;
                }
                Countermeasure::NotifyOrchestrator => {}
            }
        }
    }

    pub(super) fn integrate(&mut self) {
        self.pos += self.vel;
    }

    fn nearest_peer<'a>(&self, snapshot: &'a Snapshot) -> Option<(&'a DroneId, Vec3, f64)> {
        snapshot
            .iter()
            .filter(|(id, _)| **id != self.id)
            .map(|(id, (pos, _))| (id, *pos, self.pos.distance(pos)))
            .min_by(|a, b| a.2.total_cmp(&b.2))
    }

    fn threat_within(&self, snapshot: &Snapshot, radius: f64) -> bool {
        self.nearest_peer(snapshot).is_some_and(|(_, _, d)| d < radius)
    }

    /// Nearest peer this drone is actively avoiding (by its own trust
    /// decision or a dispatched plan) that is closer than the required
    /// separation right now.
    fn nearest_avoid_target(&self, snapshot: &Snapshot, required: f64) -> Option<Vec3> {
        let mut targets: BTreeSet<&DroneId> = self.plan_avoid.iter().collect();
        for (subject, actions) in &self.counters {
            if actions.contains(&Countermeasure::Avoid) {
                targets.insert(subject);
            }
        }
        targets
            .into_iter()
            .filter_map(|id| snapshot.get(id).map(|(pos, _)| (*pos, self.pos.distance(pos))))
            .filter(|(_, d)| *d < required)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(pos, _)| pos)
    }

    fn minimizing(&self) -> bool {
        self.plan_minimize
            || self
                .counters
                .values()
                .any(|actions| actions.contains(&Countermeasure::MinimizeSpeed))
    }

    /// Walk the control state machine one step. Returns the trigger token
    /// announced with the transition, if the drone moved between states.
    fn advance_protocol(
        &mut self,
        env: &EnvTick,
        snapshot: &Snapshot,
        rules: &SafetyRuleSet,
        ignoring: bool,
        stop_epsilon: f64,
    ) -> Option<&'static str> {
        let required = rules.numeric().required_separation_m(env.weather);
        let speed = self.vel.norm();
        match (self.mode, self.state.as_str()) {
            (Mode::Cruise, "S1") if !self.booted => {
                self.booted = true;
                None
            }
            (Mode::Cruise, "S1") => {
                self.state = st("S2");
                Some("power_on")
            }
            (Mode::Cruise, "S2") => {
                self.state = st("S3");
                Some("moving_forward")
            }
            (Mode::Cruise, "S3") => {
                if env.object {
                    // The observed object is the trigger; it is already in
                    // this tick's announced events.
                    self.mode = Mode::ObjectAvoid { in_s6: false };
                    self.state = st("S5");
                    None
                } else if self.stop_ordered && !ignoring {
                    self.mode = Mode::Stopping { braked: false, leaving: false, forever: true };
                    self.state = st("S8");
                    Some("route_clear")
                } else if env.weather {
                    self.mode = Mode::Stopping { braked: false, leaving: false, forever: false };
                    self.state = st("S8");
                    Some("route_clear")
                } else if !ignoring && self.threat_within(snapshot, 2.0 * required) {
                    self.mode = Mode::Yield { leaving: false };
                    self.state = st("S8");
                    Some("route_clear")
                } else {
                    None
                }
            }
            (Mode::ObjectAvoid { in_s6: false }, _) => {
                self.mode = Mode::ObjectAvoid { in_s6: true };
                self.state = st("S6");
                Some("avoidance_possible")
            }
            (Mode::ObjectAvoid { in_s6: true }, _) => {
                self.mode = Mode::Cruise;
                self.state = st("S3");
                Some("plan_followed")
            }
            (Mode::Yield { leaving: false }, "S8") => {
                self.state = st("S9");
                Some("speed_request")
            }
            (Mode::Yield { leaving: false }, "S9") => {
                self.state = st("S20");
                Some("maintain_distance")
            }
            (Mode::Yield { leaving: false }, "S20") => {
                if ignoring || !self.threat_within(snapshot, 2.0 * required) {
                    self.mode = Mode::Yield { leaving: true };
                    self.state = st("S9");
                    Some("separation_restored")
                } else {
                    None
                }
            }
            (Mode::Yield { leaving: true }, "S9") => {
                self.state = st("S8");
                Some("return")
            }
            (Mode::Yield { leaving: true }, "S8") => {
                self.mode = Mode::Cruise;
                self.state = st("S3");
                Some("data_needed")
            }
            (Mode::Stopping { braked: false, .. }, "S8") => {
                self.state = st("S11");
                Some("stop_request")
            }
            (Mode::Stopping { braked: false, .. }, "S11") => {
                self.state = st("S16");
                Some("stop_advised")
            }
            (Mode::Stopping { braked: false, .. }, "S16") => {
                self.state = st("S18");
                Some("strong")
            }
            (Mode::Stopping { braked: false, leaving, forever }, "S18") => {
                if speed <= stop_epsilon {
                    self.mode = Mode::Stopping { braked: true, leaving, forever };
                    self.state = st("S16");
                    Some("stopped")
                } else {
                    None
                }
            }
            (Mode::Stopping { braked: true, leaving: false, .. }, "S16") => {
                self.state = st("S11");
                Some("return")
            }
            (Mode::Stopping { braked: true, leaving: false, forever }, "S11") => {
                if !forever && !env.weather && !self.stop_ordered {
                    self.mode = Mode::Stopping { braked: true, leaving: true, forever };
                    self.state = st("S8");
                    Some("return")
                } else {
                    None
                }
            }
            (Mode::Stopping { leaving: true, .. }, "S8") => {
                self.mode = Mode::Cruise;
                self.state = st("S3");
                Some("data_needed")
            }
            _ => None,
        }
    }

    /// True when the next tick is guaranteed to move to a different state —
    /// the middle of a protocol walk. Broadcasts sent now will be superseded
    /// by that change, so the autopilot may send them even mid-manoeuvre.
    fn walking(&self, stop_epsilon: f64) -> bool {
        match (self.mode, self.state.as_str()) {
            (Mode::Cruise, "S1" | "S2") => true,
            (Mode::ObjectAvoid { .. }, _) => true,
            (Mode::Yield { leaving: false }, "S8" | "S9") => true,
            (Mode::Yield { leaving: true }, "S8" | "S9") => true,
            (Mode::Stopping { braked: false, .. }, "S8" | "S11" | "S16") => true,
            (Mode::Stopping { braked: false, .. }, "S18") => self.vel.norm() <= stop_epsilon,
            (Mode::Stopping { braked: true, leaving: false, .. }, "S16") => true,
            (Mode::Stopping { leaving: true, .. }, "S8") => true,
            _ => false,
        }
    }

    /// Steer toward the current waypoint, advancing past waypoints already
    /// reached. Returns the desired direction and speed.
    fn mission_setpoint(&mut self) -> (Vec3, f64) {
        let reach = self.cruise_speed.max(1.0);
        while self.waypoint + 1 < self.mission.len()
            && self.pos.distance(&(self.mission[self.waypoint] + self.lateral_offset)) <= reach
        {
            self.waypoint += 1;
        }
        let target = self.mission[self.waypoint] + self.lateral_offset;
        let to_target = target - self.pos;
        if self.waypoint + 1 == self.mission.len() && to_target.norm() <= reach {
            // Mission complete: hover.
            return (self.vel.normalized(), 0.0);
        }
        (to_target.normalized(), self.cruise_speed)
    }

    fn decide_velocity(
        &mut self,
        tick: u64,
        env: &EnvTick,
        snapshot: &Snapshot,
        rules: &SafetyRuleSet,
        limits: &KinematicLimits,
        ignoring: bool,
        stop_epsilon: f64,
    ) -> Vec3 {
        let required = rules.numeric().required_separation_m(env.weather);
        let max_speed = self.twin.attrs.max_speed_mps;

        // Scripted overrides trump the autopilot entirely.
        if let Some(burst) = self.burst_at(tick) {
            let dir = if self.vel.normalized() != Vec3::ZERO {
                self.vel.normalized()
            } else {
                let (d, _) = self.mission_setpoint();
                if d == Vec3::ZERO {
                    Vec3::new(1.0, 0.0, 0.0)
                } else {
                    d
                }
            };
            return dir * burst;
        }

        // Emergency avoidance: flee radially from the nearest avoided peer
        // inside the separation bubble, unconstrained by turn or
        // acceleration limits.
        if !ignoring {
            if let Some(threat) = self.nearest_avoid_target(snapshot, required) {
                let mut dir = (self.pos - threat).horizontal().normalized();
                if dir == Vec3::ZERO {
                    dir = (self.pos - threat).normalized();
                }
                if dir == Vec3::ZERO {
                    dir = Vec3::new(1.0, 0.0, 0.0);
                }
                return dir * max_speed;
            }
        }

        let hold_heading = self.vel.normalized();
        let (mut dir, mut speed) = match self.mode {
            Mode::Cruise | Mode::ObjectAvoid { .. } => self.mission_setpoint(),
            Mode::Yield { leaving: true } => self.mission_setpoint(),
            Mode::Yield { leaving: false } => {
                if ignoring {
                    self.mission_setpoint()
                } else if self.vel.norm() <= stop_epsilon {
                    // Already yielded to a stop: stay put until the conflict
                    // clears, so broadcast predictions stay trivially exact.
                    (hold_heading, 0.0)
                } else {
                    let closing = self
                        .nearest_peer(snapshot)
                        .map(|(_, pos, _)| (pos - self.pos).normalized().dot(&self.vel))
                        .unwrap_or(0.0);
                    if closing > stop_epsilon {
                        (hold_heading, 0.0)
                    } else {
                        self.mission_setpoint()
                    }
                }
            }
            Mode::Stopping { leaving: true, .. } => self.mission_setpoint(),
            Mode::Stopping { .. } => (hold_heading, 0.0),
        };
        if self.stop_ordered && !ignoring {
            speed = 0.0;
        }
        if self.minimizing() && !ignoring {
            speed = speed.min(self.cruise_speed / 2.0);
        }
        speed = speed.min(max_speed);

        let steer = if self.vel.norm() <= stop_epsilon {
            dir
        } else {
            rotate_toward(self.vel, dir, limits.turn_limit_deg)
        };
        if steer != Vec3::ZERO {
            dir = steer;
        }
        let target = dir * speed;
        let acc = (target - self.vel).clamp_norm(limits.accel_per_tick);
        (self.vel + acc).clamp_norm(max_speed)
    }

    fn broadcast(&self, tick: u64, env: &EnvTick, prev_vel: Vec3, stop_epsilon: f64) -> Option<Vec<PredictedPoint>> {
        if !env.broadcast_due || env.broadcast_lost || self.silent_at(tick) {
            return None;
        }
        // Constant-velocity predictions are only meaningful when the
        // velocity has settled — or mid-walk, where the next state change
        // supersedes this broadcast anyway.
        let steady = (self.vel - prev_vel).norm() <= 1e-9;
        if !steady && !self.walking(stop_epsilon) {
            return None;
        }
        let mut points = predict_trajectory(&self.twin, self.pos, self.vel, Vec3::ZERO, tick)
            .ok()?
            .into_iter()
            .map(|(tick, pos)| PredictedPoint { tick, pos })
            .collect::<Vec<_>>();
        if let Some(offset) = self.false_prediction_at(tick) {
            for p in &mut points {
                p.pos += Vec3::new(offset, 0.0, 0.0);
            }
        }
        Some(points)
    }

    /// Decide one tick: walk the state machine, pick a velocity, and emit
    /// the telemetry record for this tick. The runner has already advanced
    /// `pos` with last tick's velocity.
    pub(super) fn step(
        &mut self,
        tick: u64,
        env: &EnvTick,
        snapshot: &Snapshot,
        rules: &SafetyRuleSet,
        limits: &KinematicLimits,
        stop_epsilon: f64,
    ) -> TelemetryRecord {
        let ignoring = self.ignoring_separation_at(tick);
        let mut events = BTreeSet::new();
        if env.object {
            events.insert("object_detected".to_string());
        }
        if env.weather {
            events.insert(EVENT_WEATHER_SEVERE.to_string());
        }
        if env.interference {
            events.insert(EVENT_SIGNAL_INTERFERENCE.to_string());
        }
        if let Some(trigger) = self.advance_protocol(env, snapshot, rules, ignoring, stop_epsilon)
        {
            events.insert(trigger.to_string());
        }

        let prev_vel = self.vel;
        self.vel = self.decide_velocity(tick, env, snapshot, rules, limits, ignoring, stop_epsilon);

        let silent = self.silent_at(tick);
        let declared_state = if silent {
            None
        } else {
            Some(self.wrong_state_at(tick).unwrap_or_else(|| self.state.clone()))
        };
        TelemetryRecord {
            tick,
            drone_id: self.id.clone(),
            pos: self.pos,
            vel: self.vel,
            declared_state,
            events: if silent { BTreeSet::new() } else { events },
            broadcast_futures: self.broadcast(tick, env, prev_vel, stop_epsilon),
        }
    }
}
