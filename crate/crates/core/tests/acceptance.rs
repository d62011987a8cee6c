//! Release gate: every core guarantee, checked end to end against
//! independent oracles and the bundled assets. Each test prints one
//! `ACCEPTANCE NN PASS` line (visible with `--nocapture`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use twin_trust::compliance::{assess, ComplianceVerdict, Trace};
use twin_trust::dt_model::{
    canonical_twin, deserialize_twin, serialize_twin, validate_fsm, DroneId, StateId,
};
use twin_trust::geom::Vec3;
use twin_trust::safety::{
    check_separation, check_static, classify_uca, compile_ruleset, serialize_catalog,
    CausalCause, CausalFactor, Countermeasure, Hazard, HazardCatalog, RecoveryPlan,
    SafetyRuleSet, Severity, StaticViolation, SystemComponent, UcaTemplate, UcaType,
};
use twin_trust::sim::{load_scenario, run_scenario, write_outputs, Scenario, SimulationResult};
use twin_trust::trust::{
    aggregate_indirect, direct_score, update_direct, Decision, DirectEvidence,
    ReputationReport, TrustConfig, TrustLedger,
};
use twin_trust::DigitalTwin;

fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn scenario_path(name: &str) -> PathBuf {
    assets_dir().join("scenarios").join(format!("{name}.json"))
}

const BUNDLED_SCENARIOS: [&str; 3] =
    ["honest_pair", "separation_violator", "persistent_tailgater"];

fn run_bundled(name: &str) -> (Scenario, SafetyRuleSet, SimulationResult) {
    let (scenario, rules) = load_scenario(&scenario_path(name)).expect("bundled scenario loads");
    let result = run_scenario(&scenario, &rules).expect("bundled scenario runs");
    (scenario, rules, result)
}

/// Peer positions by tick for `subject`, drawn from everyone else's trace.
fn peer_positions(
    result: &SimulationResult,
    subject: &DroneId,
) -> BTreeMap<u64, Vec<Vec3>> {
    let mut out: BTreeMap<u64, Vec<Vec3>> = BTreeMap::new();
    for (id, records) in &result.traces {
        if id == subject {
            continue;
        }
        for r in records {
            out.entry(r.tick).or_default().push(r.pos);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// 01 — the shipped operating machine, edge for edge
// ---------------------------------------------------------------------------

/// The reference machine, transcribed by hand: 23 states S1..S23 and every
/// transition edge as (from, trigger, to).
const STATE_TABLE: [(&str, &str); 23] = [
    ("S1", "Accelerate to Start"),
    ("S2", "Air Trajectory Planner Updates"),
    ("S3", "Flight Navigation Updates"),
    ("S4", "Decelerate to Stop"),
    ("S5", "Object Detection"),
    ("S6", "Contingency Plan"),
    ("S7", "Lane Changing"),
    ("S8", "Drone Signal Interface"),
    ("S9", "Speed Information"),
    ("S10", "Lane Keeping Information"),
    ("S11", "Stop Information"),
    ("S12", "Right Turn"),
    ("S13", "Left Turn"),
    ("S14", "Level Changing"),
    ("S15", "Environmental Issue"),
    ("S16", "Brake"),
    ("S17", "Light Brake"),
    ("S18", "Strong Brake"),
    ("S19", "Emergency Brake"),
    ("S20", "Maintain the Distance"),
    ("S21", "Speed Keeping"),
    ("S22", "Accelerate the Speed"),
    ("S23", "Decelerate the Speed"),
];

const EDGE_TABLE: [(&str, &str, &str); 42] = [
    ("S1", "power_on", "S2"),
    ("S2", "moving_forward", "S3"),
    ("S3", "object_detected", "S5"),
    ("S3", "route_clear", "S8"),
    ("S4", "cleared", "S1"),
    ("S5", "object_persists_long", "S4"),
    ("S5", "mission_end", "S4"),
    ("S5", "avoidance_possible", "S6"),
    ("S5", "object_still_present", "S7"),
    ("S6", "plan_followed", "S3"),
    ("S7", "normal_flow", "S3"),
    ("S8", "speed_request", "S9"),
    ("S8", "lane_request", "S10"),
    ("S8", "stop_request", "S11"),
    ("S8", "data_needed", "S3"),
    ("S9", "maintain_distance", "S20"),
    ("S9", "keep_speed", "S21"),
    ("S9", "accelerate", "S22"),
    ("S9", "decelerate", "S23"),
    ("S9", "return", "S8"),
    ("S10", "turn_right", "S12"),
    ("S10", "turn_left", "S13"),
    ("S10", "change_level", "S14"),
    ("S10", "return", "S8"),
    ("S11", "stop_advised", "S16"),
    ("S11", "environment_issue", "S15"),
    ("S11", "return", "S8"),
    ("S12", "turn_again", "S10"),
    ("S13", "turn_again", "S10"),
    ("S14", "direction_change", "S10"),
    ("S15", "issue_severe", "S11"),
    ("S16", "light", "S17"),
    ("S16", "strong", "S18"),
    ("S16", "emergency", "S19"),
    ("S16", "return", "S11"),
    ("S17", "obstacle", "S16"),
    ("S18", "stopped", "S16"),
    ("S19", "handled", "S16"),
    ("S20", "separation_restored", "S9"),
    ("S21", "conflict", "S9"),
    ("S22", "conflict", "S9"),
    ("S23", "hazard_cleared", "S9"),
];

#[test]
fn acceptance_01_operating_machine_matches_the_reference_table() {
    let twin = canonical_twin(DroneId::new("probe"));
    let fsm = &twin.fsm;

    // States: exactly the table, names included, one-to-one.
    assert_eq!(fsm.states.len(), STATE_TABLE.len());
    for (id, name) in STATE_TABLE {
        let state = fsm
            .state(&StateId::new(id))
            .unwrap_or_else(|| panic!("state {id} missing"));
        assert_eq!(state.name, name, "state {id} renamed");
    }

    // Edges: exactly the table, one-to-one.
    let declared: BTreeSet<(String, String, String)> = fsm
        .transitions
        .iter()
        .map(|t| (t.from.to_string(), t.trigger.clone(), t.to.to_string()))
        .collect();
    let expected: BTreeSet<(String, String, String)> = EDGE_TABLE
        .iter()
        .map(|(f, tr, to)| (f.to_string(), tr.to_string(), to.to_string()))
        .collect();
    assert_eq!(declared, expected, "transition edges differ from the reference table");
    assert_eq!(fsm.transitions.len(), EDGE_TABLE.len(), "duplicate edges");

    assert_eq!(fsm.initial, StateId::new("S1"));
    assert_eq!(fsm.terminal, BTreeSet::from([StateId::new("S4")]));

    // The machine validates clean...
    let report = validate_fsm(fsm);
    assert!(report.is_valid(), "validator found: {:?}", report.violations);

    // ...and an independent breadth-first walk over the *table* edges
    // reaches every state from S1.
    let mut reached = BTreeSet::from(["S1"]);
    let mut frontier = vec!["S1"];
    while let Some(at) = frontier.pop() {
        for (from, _, to) in EDGE_TABLE {
            if from == at && reached.insert(to) {
                frontier.push(to);
            }
        }
    }
    assert_eq!(reached.len(), STATE_TABLE.len(), "unreachable states: {reached:?}");

    println!("ACCEPTANCE 01 PASS — operating machine matches the reference table");
}

// ---------------------------------------------------------------------------
// 02 — pairwise separation rule
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_separation_rule_boundary_symmetry_and_weather() {
    let rules = SafetyRuleSet::bundled_default();
    let origin = Vec3::new(0.0, 0.0, 0.0);

    assert!(check_separation(origin, Vec3::new(39.0, 0.0, 0.0), &rules, false).is_violation());
    assert!(!check_separation(origin, Vec3::new(40.0, 0.0, 0.0), &rules, false).is_violation());

    let mut rng = ChaCha8Rng::seed_from_u64(0x5e9a);
    let coord = |rng: &mut ChaCha8Rng| rng.gen_range(-100.0..100.0);
    for _ in 0..1000 {
        let a = Vec3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng));
        let b = Vec3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng));
        let fair = check_separation(a, b, &rules, false);
        let swapped = check_separation(b, a, &rules, false);
        let weather = check_separation(a, b, &rules, true);

        assert_eq!(fair.is_violation(), swapped.is_violation(), "asymmetric at {a:?} {b:?}");
        if fair.is_violation() {
            assert!(weather.is_violation(), "weather must only widen the floor");
        }
        // Exact oracle: strict comparison against the plain distance.
        let d = a.distance(&b);
        assert_eq!(fair.is_violation(), d < 40.0);
        assert_eq!(weather.is_violation(), d < 60.0);
    }

    println!("ACCEPTANCE 02 PASS — separation boundary, symmetry, and weather widening");
}

// ---------------------------------------------------------------------------
// 03 — static weight gate
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_weight_limit_is_strict() {
    let rules = SafetyRuleSet::bundled_default();
    let mut attrs = canonical_twin(DroneId::new("probe")).attrs;

    attrs.weight_kg = 20.0;
    assert!(
        check_static(&attrs, &rules)
            .iter()
            .any(|v| matches!(v, StaticViolation::MaxWeight { .. })),
        "20.0 kg must violate the strict limit"
    );

    attrs.weight_kg = 19.99;
    assert!(
        check_static(&attrs, &rules).is_empty(),
        "19.99 kg with clean certificates must pass every static gate"
    );

    println!("ACCEPTANCE 03 PASS — weight 20.0 kg rejected, 19.99 kg accepted");
}

// ---------------------------------------------------------------------------
// 04 — honest drones assess clean against their own declarations
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_honest_traces_self_assess_clean() {
    for name in BUNDLED_SCENARIOS {
        let (scenario, rules, result) = run_bundled(name);
        for drone in scenario.drones.iter().filter(|d| d.deviation.is_empty()) {
            let records = result.traces[&drone.id].clone();
            let trace = Trace::new(drone.id.clone(), records).expect("trace is well-formed");
            let peers = peer_positions(&result, &drone.id);
            let verdict = assess(
                &result.twins[&drone.id],
                &trace,
                &rules,
                &peers,
                &scenario.compliance,
            )
            .expect("assessment runs");
            assert_eq!(verdict.honesty, 1.0, "{name}/{}: honesty", drone.id);
            assert_eq!(verdict.violation_count(), 0, "{name}/{}: violations", drone.id);
        }
    }

    println!("ACCEPTANCE 04 PASS — honest drones self-assess at honesty 1.0, zero violations");
}

// ---------------------------------------------------------------------------
// 05 — detection latency and first-flag exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_violator_is_flagged_exactly_and_distrusted_promptly() {
    let (scenario, _, result) = run_bundled("separation_violator");
    let alpha = DroneId::new("alpha");
    let bravo = DroneId::new("bravo");
    let window = scenario.eval_window_ticks;

    let verdict = &result.verdicts[&bravo];
    let violating: Vec<u64> = verdict
        .per_tick
        .iter()
        .filter(|t| t.status.is_violation())
        .map(|t| t.tick)
        .collect();
    assert!(!violating.is_empty(), "the deviant must be flagged");

    // Every flag names the separation rule.
    for t in verdict.per_tick.iter().filter(|t| t.status.is_violation()) {
        assert_eq!(t.rule_id.as_deref(), Some("min_separation"), "tick {}", t.tick);
    }

    // The decision flips no later than the end of the second violating
    // window.
    let violating_windows: BTreeSet<u64> = violating.iter().map(|t| t / window).collect();
    assert!(violating_windows.len() >= 2, "need two violating windows: {violating_windows:?}");
    let second = *violating_windows.iter().nth(1).unwrap();
    let deadline_tick = (second + 1) * window - 1;
    let flip = result
        .series
        .iter()
        .find(|r| {
            r.trustor == alpha && r.trustee == bravo && r.decision == Decision::Untrusted
        })
        .expect("the observer must distrust the deviant");
    assert!(
        flip.window_end_tick <= deadline_tick,
        "distrust at {} but the second violating window closed at {deadline_tick}",
        flip.window_end_tick
    );

    // The first flagged tick equals a brute-force scan of the recorded
    // traces for the first tick closer than 40 m. Exact match.
    let ticks_a = &result.traces[&alpha];
    let ticks_b = &result.traces[&bravo];
    let first_close = ticks_a
        .iter()
        .zip(ticks_b)
        .find(|(a, b)| a.pos.distance(&b.pos) < 40.0)
        .map(|(a, _)| a.tick)
        .expect("traces must come within 40 m");
    assert_eq!(violating[0], first_close, "first flag vs brute-force first approach");

    println!("ACCEPTANCE 05 PASS — deviant flagged at the exact tick and distrusted within two windows");
}

// ---------------------------------------------------------------------------
// 06 — trust arithmetic against brute-force recomputation
// ---------------------------------------------------------------------------

fn verdict_with(honesty: f64, openness: f64) -> ComplianceVerdict {
    ComplianceVerdict {
        drone_id: DroneId::new("subject"),
        per_tick: Vec::new(),
        honesty,
        openness,
        no_declaration: false,
        summary: BTreeMap::new(),
    }
}

#[test]
fn acceptance_06_trust_scores_match_brute_force() {
    let cfg = TrustConfig::default();
    let tol = 1e-9;

    // k consecutive positive windows: direct = (k+1)/(k+2), full openness.
    for k in 0..=50u64 {
        let mut ev = DirectEvidence::default();
        for _ in 0..k {
            ev = update_direct(&ev, &verdict_with(1.0, 1.0), &cfg).0;
        }
        let want = (k as f64 + 1.0) / (k as f64 + 2.0);
        assert!(
            (direct_score(&ev, &cfg) - want).abs() <= tol,
            "k={k}: {} vs {want}",
            direct_score(&ev, &cfg)
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x7057);

    // Random window lists against a from-scratch recomputation.
    for _ in 0..1000 {
        let len = rng.gen_range(0..30);
        let windows: Vec<(f64, f64)> = (0..len)
            .map(|_| (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)))
            .collect();
        let mut ev = DirectEvidence::default();
        for &(h, o) in &windows {
            ev = update_direct(&ev, &verdict_with(h, o), &cfg).0;
        }
        let p = windows.iter().filter(|(h, _)| *h >= cfg.honesty_threshold).count() as f64;
        let n = windows.len() as f64 - p;
        let last_openness = windows.last().map_or(1.0, |&(_, o)| o);
        let want = (p + 1.0) / (p + n + 2.0) * last_openness.max(cfg.openness_floor);
        assert!((direct_score(&ev, &cfg) - want).abs() <= tol);
    }

    // Random report sets against a brute-force weighted mean.
    for _ in 0..1000 {
        let reporters: Vec<DroneId> = (0..6).map(|i| DroneId::new(format!("r{i}"))).collect();
        let mut trust: BTreeMap<DroneId, f64> = BTreeMap::new();
        for r in &reporters {
            if rng.gen_bool(0.8) {
                trust.insert(r.clone(), rng.gen_range(0.0..=1.0));
            }
        }
        let reports: Vec<ReputationReport> = (0..rng.gen_range(0..8))
            .map(|_| ReputationReport {
                reporter_id: reporters[rng.gen_range(0..reporters.len())].clone(),
                subject_id: DroneId::new("subject"),
                score: rng.gen_range(0.0..=1.0),
                window_count: rng.gen_range(1..20),
                tick_issued: rng.gen_range(0..1000),
            })
            .collect();

        let got = aggregate_indirect(&reports, &trust, &cfg);
        let (mut num, mut den) = (0.0, 0.0);
        for r in &reports {
            let t = trust.get(&r.reporter_id).copied().unwrap_or(0.5);
            if t < cfg.report_trust_floor {
                continue;
            }
            num += t * r.window_count as f64 * r.score;
            den += t * r.window_count as f64;
        }
        let want = if den <= 0.0 { 0.5 } else { num / den };
        assert!((got - want).abs() <= tol, "{got} vs {want}");
        assert!((0.0..=1.0).contains(&got));
    }

    // Scores stay in [0, 1] under 10,000 random ledger updates.
    let owner = DroneId::new("owner");
    let ids: Vec<DroneId> = (0..3).map(|i| DroneId::new(format!("s{i}"))).collect();
    for _ in 0..1000 {
        let mut ledger = TrustLedger::new(owner.clone(), cfg).expect("config is valid");
        for _ in 0..10 {
            let subject = &ids[rng.gen_range(0..ids.len())];
            match rng.gen_range(0..4) {
                0 => {
                    let v = verdict_with(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
                    ledger.record_window(subject, &v);
                }
                1 => {
                    ledger.record_opaque_window(subject);
                }
                2 => {
                    let reporter = &ids[rng.gen_range(0..ids.len())];
                    if reporter != subject {
                        let report = ReputationReport {
                            reporter_id: reporter.clone(),
                            subject_id: subject.clone(),
                            score: rng.gen_range(0.0..=1.0),
                            window_count: rng.gen_range(1..10),
                            tick_issued: rng.gen_range(0..100),
                        };
                        ledger.ingest_report(report).expect("report is well-formed");
                    }
                }
                _ => ledger.recompute(rng.gen_range(0..200)),
            }
            ledger.recompute(200);
            for id in &ids {
                if let Some(s) = ledger.subject(id) {
                    for (label, score) in
                        [("direct", s.direct), ("indirect", s.indirect), ("combined", s.combined)]
                    {
                        assert!(
                            (0.0..=1.0).contains(&score),
                            "{label} for {id} out of range: {score}"
                        );
                    }
                }
            }
        }
    }

    println!("ACCEPTANCE 06 PASS — trust arithmetic matches brute force; scores stay in [0, 1]");
}

// ---------------------------------------------------------------------------
// 07 — discrepancy classification decision table
// ---------------------------------------------------------------------------

fn rules_with_tolerance(tolerance: u32) -> SafetyRuleSet {
    let mut catalog = HazardCatalog::default();
    catalog.numeric.timing_tolerance_ticks = tolerance;
    compile_ruleset(&serialize_catalog(&catalog)).expect("catalog compiles")
}

#[test]
fn acceptance_07_uca_classification_reproduces_the_decision_table() {
    for tolerance in 0..=3u32 {
        let rules = rules_with_tolerance(tolerance);

        assert!(classify_uca(None, None, &rules).is_err());
        assert_eq!(
            classify_uca(None, Some(("act", 100)), &rules).unwrap(),
            Some(UcaType::Commission)
        );
        assert_eq!(
            classify_uca(Some(("act", 100)), None, &rules).unwrap(),
            Some(UcaType::Omission)
        );

        for dt in -5i64..=5 {
            for same_token in [true, false] {
                let observed_token = if same_token { "act" } else { "other" };
                let got = classify_uca(
                    Some(("act", 100)),
                    Some((observed_token, 100 + dt)),
                    &rules,
                )
                .unwrap();

                // The decision table, rebuilt by hand.
                let tol = i64::from(tolerance);
                let want = if dt < -tol {
                    Some(UcaType::TooEarly)
                } else if dt > tol {
                    Some(UcaType::TooLate)
                } else if dt == 0 && !same_token {
                    Some(UcaType::WrongValue)
                } else {
                    None
                };
                assert_eq!(got, want, "tolerance={tolerance} dt={dt} same={same_token}");
            }
        }
    }

    println!("ACCEPTANCE 07 PASS — discrepancy classes match the hand-built table exhaustively");
}

// ---------------------------------------------------------------------------
// 08 — determinism
// ---------------------------------------------------------------------------

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let mut files: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    files.push("manifest.json".into());
    files
        .into_iter()
        .map(|rel| {
            let bytes = fs::read(dir.join(&rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
            (rel, bytes)
        })
        .collect()
}

#[test]
fn acceptance_08_runs_are_deterministic_and_seed_sensitive() {
    for name in BUNDLED_SCENARIOS {
        let (scenario, rules, _) = run_bundled(name);
        let tmp = tempfile::tempdir().unwrap();

        let dirs: Vec<PathBuf> = (0..2)
            .map(|i| {
                let out = tmp.path().join(format!("{name}_{i}"));
                let result = run_scenario(&scenario, &rules).unwrap();
                write_outputs(&result, &out).unwrap();
                out
            })
            .collect();
        let first = artifact_bytes(&dirs[0]);
        let second = artifact_bytes(&dirs[1]);
        assert_eq!(
            first.keys().collect::<Vec<_>>(),
            second.keys().collect::<Vec<_>>(),
            "{name}: artifact lists differ"
        );
        for (rel, bytes) in &first {
            assert_eq!(bytes, &second[rel], "{name}: {rel} differs between identical runs");
        }

        // A different seed must change at least the manifest.
        let mut reseeded = scenario.clone();
        reseeded.seed = scenario.seed.wrapping_add(1);
        let out = tmp.path().join(format!("{name}_reseeded"));
        write_outputs(&run_scenario(&reseeded, &rules).unwrap(), &out).unwrap();
        assert_ne!(
            fs::read(dirs[0].join("manifest.json")).unwrap(),
            fs::read(out.join("manifest.json")).unwrap(),
            "{name}: manifest must reflect the seed"
        );
    }

    println!("ACCEPTANCE 08 PASS — byte-identical reruns; the seed marks the manifest");
}

// ---------------------------------------------------------------------------
// 09 — serialization round-trips
// ---------------------------------------------------------------------------

fn random_twin(rng: &mut ChaCha8Rng, index: usize) -> DigitalTwin {
    let mut twin = canonical_twin(DroneId::new(format!("drone-{index}")));
    twin.attrs.weight_kg = rng.gen_range(0.1..19.9);
    twin.attrs.max_speed_mps = rng.gen_range(1.0..25.0);
    twin.attrs.comm_ratio = rng.gen_range(0.0..=1.0);
    twin.attrs.license_ok = rng.gen_bool(0.9);
    twin.attrs.airworthiness_ok = rng.gen_bool(0.9);
    twin.mission = (0..rng.gen_range(0..5))
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1000.0..1000.0),
                rng.gen_range(-1000.0..1000.0),
                rng.gen_range(0.0..200.0),
            )
        })
        .collect();
    let horizon = rng.gen_range(1..=20u32);
    twin.prediction.horizon_ticks = horizon;
    twin.prediction.broadcast_period_ticks = rng.gen_range(1..=horizon);
    // Author ordering must not matter.
    twin.fsm.states.shuffle(rng);
    twin.fsm.transitions.shuffle(rng);
    twin
}

fn random_catalog(rng: &mut ChaCha8Rng) -> HazardCatalog {
    let mut catalog = HazardCatalog::default();
    catalog.numeric.min_separation_m = rng.gen_range(1.0..100.0);
    catalog.numeric.max_weight_kg = rng.gen_range(1.0..50.0);
    catalog.numeric.weather_separation_factor = rng.gen_range(1.0..3.0);
    catalog.numeric.max_speed_mps = rng.gen_range(1.0..50.0);
    catalog.numeric.timing_tolerance_ticks = rng.gen_range(0..10);
    catalog.numeric.report_period_ticks = rng.gen_range(1..1000);

    let severities =
        [Severity::Low, Severity::Medium, Severity::High, Severity::Catastrophic];
    let components = [
        SystemComponent::PhysicalDrone,
        SystemComponent::SoftwareController,
        SystemComponent::NavigationSystem,
        SystemComponent::Orchestrator,
        SystemComponent::PeerDrones,
    ];
    let predicates = [
        twin_trust::dt_model::GuardPredicate::SeparationLtMin,
        twin_trust::dt_model::GuardPredicate::SpeedGtZero,
        twin_trust::dt_model::GuardPredicate::SpeedGtMax,
        twin_trust::dt_model::GuardPredicate::WeatherSevere,
        twin_trust::dt_model::GuardPredicate::SignalInterference,
    ];
    let uca_types = [
        UcaType::Commission,
        UcaType::Omission,
        UcaType::TooEarly,
        UcaType::TooLate,
        UcaType::WrongValue,
    ];
    let causes = [
        CausalCause::ConnectionProblem,
        CausalCause::EnvironmentInfluence,
        CausalCause::InternalFault,
        CausalCause::CoordinationFailure,
    ];
    let actions = [
        Countermeasure::Avoid,
        Countermeasure::MinimizeSpeed,
        Countermeasure::Stop,
        Countermeasure::Reroute,
        Countermeasure::NotifyOrchestrator,
    ];

    catalog.hazards = (0..rng.gen_range(1..4))
        .map(|i| Hazard {
            id: format!("H{i}"),
            description: format!("hazard number {i}"),
            system_boundary: components
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .copied()
                .collect(),
            severity: severities[rng.gen_range(0..severities.len())],
        })
        .collect();
    catalog.plans = (0..rng.gen_range(1..4))
        .map(|i| RecoveryPlan {
            id: format!("P{i}"),
            actions: (0..rng.gen_range(1..4))
                .map(|_| actions[rng.gen_range(0..actions.len())])
                .collect(),
            deadline_ticks: rng.gen_range(1..50),
        })
        .collect();
    catalog.ucas = (0..rng.gen_range(0..5))
        .map(|i| UcaTemplate {
            id: format!("U{i}"),
            hazard_id: format!("H{}", rng.gen_range(0..catalog.hazards.len())),
            action: format!("token_{i}"),
            uca_type: uca_types[rng.gen_range(0..uca_types.len())],
            condition: predicates[rng.gen_range(0..predicates.len())],
        })
        .collect();
    if !catalog.ucas.is_empty() {
        catalog.factors = (0..rng.gen_range(0..5))
            .map(|i| CausalFactor {
                id: format!("F{i}"),
                uca_id: format!("U{}", rng.gen_range(0..catalog.ucas.len())),
                cause: causes[rng.gen_range(0..causes.len())],
                recovery_plan_id: format!("P{}", rng.gen_range(0..catalog.plans.len())),
            })
            .collect();
    }
    catalog
}

#[test]
fn acceptance_09_twin_and_catalog_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0902);

    for i in 0..500 {
        let twin = random_twin(&mut rng, i);
        let text = serialize_twin(&twin);
        let parsed = deserialize_twin(&text).expect("serialized twin parses");
        let mut want = twin.clone();
        want.normalize();
        assert_eq!(parsed, want, "twin {i} did not round-trip");
    }

    for i in 0..500 {
        let catalog = random_catalog(&mut rng);
        let text = serialize_catalog(&catalog);
        let rules = compile_ruleset(&text)
            .unwrap_or_else(|e| panic!("catalog {i} failed to compile: {e}"));
        assert_eq!(rules.catalog(), &catalog, "catalog {i} did not round-trip");
    }

    println!("ACCEPTANCE 09 PASS — 500 twins and 500 catalogs round-trip structurally");
}

// ---------------------------------------------------------------------------
// 10 — offline assessment equals the in-run verdicts, byte for byte
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_offline_assessment_matches_run_verdicts() {
    let bin = env!("CARGO_BIN_EXE_twin-trust");
    let tmp = tempfile::tempdir().unwrap();
    let mut pairs_checked = 0usize;

    for name in BUNDLED_SCENARIOS {
        let (_, _, result) = run_bundled(name);
        let out = tmp.path().join(name);
        write_outputs(&result, &out).unwrap();

        for (observer, subjects) in &result.observers {
            for subject in subjects {
                let verdict_file = out.join(format!("verdicts/{observer}__{subject}.json"));
                if !verdict_file.exists() {
                    continue;
                }
                let offline = out.join(format!("assess_{observer}__{subject}.json"));
                let mut cmd = Command::new(bin);
                cmd.arg("assess")
                    .arg("--twin")
                    .arg(out.join(format!("twins/{subject}.json")))
                    .arg("--trace")
                    .arg(out.join(format!("traces/{subject}.jsonl")))
                    .arg("--out")
                    .arg(&offline);
                for peer in result.traces.keys().filter(|id| *id != subject) {
                    cmd.arg("--peers").arg(out.join(format!("traces/{peer}.jsonl")));
                }
                let status = cmd.output().expect("assess runs");
                let code = status.status.code().expect("assess exits");
                assert!(
                    code == 0 || code == 3,
                    "{name} {observer}->{subject}: unexpected exit {code}: {}",
                    String::from_utf8_lossy(&status.stderr)
                );
                assert_eq!(
                    fs::read(&verdict_file).unwrap(),
                    fs::read(&offline).unwrap(),
                    "{name}: offline verdict for {subject} (as seen by {observer}) differs"
                );
                pairs_checked += 1;
            }
        }
    }
    assert!(pairs_checked >= 6, "expected at least six observer/subject pairs");

    println!("ACCEPTANCE 10 PASS — offline assessments byte-identical for {pairs_checked} pairs");
}
