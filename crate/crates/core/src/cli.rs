//! The `twin-trust` command line: validate scenario files, run simulations,
//! and assess recorded traces against declared behaviour documents.
//!
//! Exit codes: `0` success (and, for `assess`, a conforming trace), `1` a
//! scenario or run problem, `2` unreadable or malformed input, `3` an
//! assessed trace that violates its declaration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::canonical_json::to_canonical_pretty;
use crate::compliance::{assess, ComplianceConfig, TelemetryRecord, TickStatus, Trace};
use crate::dt_model::{deserialize_twin, TwinParseError};
use crate::geom::Vec3;
use crate::safety::{compile_ruleset, Countermeasure, SafetyRuleSet};
use crate::sim::{parse_scenario, resolve_rules, run_scenario, write_outputs, Scenario};
use crate::trust::Decision;

const EXIT_PROBLEM: u8 = 1;
const EXIT_MALFORMED: u8 = 2;
const EXIT_VIOLATIONS: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "twin-trust", version)]
#[command(about = "behaviour-declaration exchange, compliance checking, and trust scoring for drone swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a behaviour document and report every problem at once.
    Validate {
        /// Behaviour document (JSON).
        twin: PathBuf,
    },

    /// Run a scenario and write reproducible artifacts.
    Run {
        /// Scenario file (JSON).
        scenario: PathBuf,

        /// Directory to write run artifacts into.
        #[arg(long)]
        out: PathBuf,

        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,

        /// Override the evaluation window length, in ticks.
        #[arg(long)]
        window: Option<u64>,

        /// Override the trust decision threshold.
        #[arg(long)]
        threshold: Option<f64>,

        /// Override the direct,indirect trust weights (e.g. `0.7,0.3`).
        #[arg(long, value_parser = parse_weights)]
        weights: Option<(f64, f64)>,

        /// Use this rules catalog instead of the scenario's choice.
        #[arg(long)]
        rules: Option<PathBuf>,
    },

    /// Assess one telemetry trace against a declared behaviour document.
    Assess {
        /// Behaviour document (JSON) of the drone under assessment.
        #[arg(long)]
        twin: PathBuf,

        /// Telemetry trace (JSON Lines) of the drone under assessment.
        #[arg(long)]
        trace: PathBuf,

        /// Telemetry trace of another drone sharing the airspace; repeat
        /// for each peer. Peer positions feed the separation checks.
        #[arg(long = "peers")]
        peers: Vec<PathBuf>,

        /// Rules catalog (JSON); without it the bundled defaults apply.
        #[arg(long)]
        rules: Option<PathBuf>,

        /// Write the verdict here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_weights(raw: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 2 {
        return Err("expected two comma-separated numbers, e.g. 0.7,0.3".into());
    }
    let direct: f64 = parts[0].trim().parse().map_err(|e| format!("direct weight: {e}"))?;
    let indirect: f64 = parts[1].trim().parse().map_err(|e| format!("indirect weight: {e}"))?;
    Ok((direct, indirect))
}

/// Entry point used by the binary. Parses arguments from the environment;
/// logging is controlled by the `TWIN_TRUST_LOG` environment variable.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TWIN_TRUST_LOG")).init();
    match Cli::parse().command {
        Command::Validate { twin } => cmd_validate(&twin),
        Command::Run { scenario, out, seed, window, threshold, weights, rules } => {
            cmd_run(&scenario, &out, seed, window, threshold, weights, rules.as_deref())
        }
        Command::Assess { twin, trace, peers, rules, out } => {
            cmd_assess(&twin, &trace, &peers, rules.as_deref(), out.as_deref())
        }
    }
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    parse_scenario(path).map_err(|err| {
        eprintln!("error: {err}");
        ExitCode::from(EXIT_MALFORMED)
    })
}

fn report_problems(scenario: &Scenario) -> Option<ExitCode> {
    let problems = scenario.validate();
    if problems.is_empty() {
        return None;
    }
    eprintln!("scenario `{}` has {} problem(s):", scenario.name, problems.len());
    for p in &problems {
        eprintln!("  - {p}");
    }
    Some(ExitCode::from(EXIT_PROBLEM))
}

fn cmd_validate(path: &Path) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: could not read {}: {e}", path.display());
            return ExitCode::from(EXIT_MALFORMED);
        }
    };
    let twin = match deserialize_twin(&text) {
        Ok(t) => t,
        Err(TwinParseError::Json(e)) => {
            eprintln!("error: {}: malformed twin document: {e}", path.display());
            return ExitCode::from(EXIT_MALFORMED);
        }
        Err(TwinParseError::Invalid(violations)) => {
            eprintln!(
                "behaviour document `{}` has {} problem(s):",
                path.display(),
                violations.len(),
            );
            for v in &violations {
                eprintln!("  - {v}");
            }
            return ExitCode::from(EXIT_PROBLEM);
        }
    };
    println!(
        "twin `{}` is valid: {} state(s), {} transition(s), {} mission step(s), horizon {}",
        twin.drone_id,
        twin.fsm.states.len(),
        twin.fsm.transitions.len(),
        twin.mission.len(),
        twin.prediction.horizon_ticks,
    );
    ExitCode::SUCCESS
}

fn decision_label(decision: Decision) -> &'static str {
    match decision {
        Decision::Unknown => "unknown",
        Decision::Trusted => "trusted",
        Decision::Untrusted => "untrusted",
    }
}

fn countermeasure_label(c: Countermeasure) -> &'static str {
    match c {
        Countermeasure::Avoid => "avoid",
        Countermeasure::MinimizeSpeed => "minimize_speed",
        Countermeasure::Stop => "stop",
        Countermeasure::Reroute => "reroute",
        Countermeasure::NotifyOrchestrator => "notify_orchestrator",
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    path: &Path,
    out: &Path,
    seed: Option<u64>,
    window: Option<u64>,
    threshold: Option<f64>,
    weights: Option<(f64, f64)>,
    rules_override: Option<&Path>,
) -> ExitCode {
    let mut scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(window) = window {
        scenario.eval_window_ticks = window;
    }
    if let Some(threshold) = threshold {
        scenario.trust.threshold = threshold;
    }
    if let Some((direct, indirect)) = weights {
        scenario.trust.weight_direct = direct;
        scenario.trust.weight_indirect = indirect;
    }
    if let Some(code) = report_problems(&scenario) {
        return code;
    }
    let rules = match rules_override {
        Some(p) => match fs::read_to_string(p)
            .map_err(|e| format!("could not read {}: {e}", p.display()))
            .and_then(|text| {
                compile_ruleset(&text).map_err(|e| format!("rules catalog {}: {e}", p.display()))
            }) {
            Ok(r) => r,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(EXIT_PROBLEM);
            }
        },
        None => match resolve_rules(&scenario, path) {
            Ok(r) => r,
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(EXIT_PROBLEM);
            }
        },
    };

    log::info!("running scenario `{}` with seed {}", scenario.name, scenario.seed);
    let result = match run_scenario(&scenario, &rules) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_PROBLEM);
        }
    };
    let manifest = match write_outputs(&result, out) {
        Ok(m) => m,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_PROBLEM);
        }
    };

    println!(
        "scenario `{}`: {} tick(s), {} drone(s), seed {}",
        scenario.name,
        scenario.ticks,
        scenario.drones.len(),
        scenario.seed,
    );
    println!("artifacts: {} ({} files)", out.display(), manifest.outputs.len() + 1);
    if !result.plans.is_empty() {
        let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
        for entry in &result.plans {
            let kind = serde_json::to_value(entry.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| format!("{:?}", entry.kind));
            *by_kind.entry(kind).or_insert(0) += 1;
        }
        let summary: Vec<String> =
            by_kind.iter().map(|(kind, n)| format!("{n} {kind}")).collect();
        println!("orchestrator: {}", summary.join(", "));
    }
    println!("trust decisions:");
    let mut any = false;
    for (trustor, decisions) in &result.final_decisions {
        for (trustee, decision) in decisions {
            any = true;
            let combined = result.ledgers[trustor]
                .subjects
                .iter()
                .find(|s| s.id == *trustee)
                .map_or(0.5, |s| s.combined);
            let actions = result
                .countermeasures
                .get(trustor)
                .and_then(|held| held.get(trustee))
                .filter(|a| !a.is_empty())
                .map(|a| {
                    let labels: Vec<&str> =
                        a.iter().map(|c| countermeasure_label(*c)).collect();
                    format!("; countermeasures: {}", labels.join(", "))
                })
                .unwrap_or_default();
            println!(
                "  {trustor} -> {trustee}: {} (combined {combined:.3}{actions})",
                decision_label(*decision),
            );
        }
    }
    if !any {
        println!("  none (fewer than two drones)");
    }
    ExitCode::SUCCESS
}

fn status_label(status: TickStatus) -> &'static str {
    match status {
        TickStatus::Conforming => "conforming",
        TickStatus::Undeclared => "undeclared",
        TickStatus::PredictionViolation => "prediction_violation",
        TickStatus::PhysicsViolation => "physics_violation",
        TickStatus::StateViolation => "state_violation",
    }
}

fn read_trace_records(path: &Path) -> Result<Vec<TelemetryRecord>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("could not read {}: {e}", path.display()))?;
    let mut records = Vec::new();
    for (number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TelemetryRecord = serde_json::from_str(line)
            .map_err(|e| format!("{}:{}: {e}", path.display(), number + 1))?;
        records.push(record);
    }
    Ok(records)
}

fn cmd_assess(
    twin_path: &Path,
    trace_path: &Path,
    peer_paths: &[PathBuf],
    rules_path: Option<&Path>,
    out: Option<&Path>,
) -> ExitCode {
    let malformed = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(EXIT_MALFORMED)
    };

    let twin = match fs::read_to_string(twin_path)
        .map_err(|e| format!("could not read {}: {e}", twin_path.display()))
        .and_then(|text| {
            deserialize_twin(&text).map_err(|e| format!("{}: {e}", twin_path.display()))
        }) {
        Ok(t) => t,
        Err(msg) => return malformed(msg),
    };

    let records = match read_trace_records(trace_path) {
        Ok(r) => r,
        Err(msg) => return malformed(msg),
    };
    let Some(first) = records.first() else {
        return malformed(format!("{}: trace holds no records", trace_path.display()));
    };
    let trace = match Trace::new(first.drone_id.clone(), records.clone()) {
        Ok(t) => t,
        Err(e) => return malformed(format!("{}: {e}", trace_path.display())),
    };

    let mut peer_positions: BTreeMap<u64, Vec<Vec3>> = BTreeMap::new();
    for path in peer_paths {
        let peer_records = match read_trace_records(path) {
            Ok(r) => r,
            Err(msg) => return malformed(msg),
        };
        for record in peer_records {
            if record.drone_id == *trace.drone_id() {
                continue;
            }
            peer_positions.entry(record.tick).or_default().push(record.pos);
        }
    }

    let rules = match rules_path {
        None => SafetyRuleSet::bundled_default(),
        Some(p) => match fs::read_to_string(p)
            .map_err(|e| format!("could not read {}: {e}", p.display()))
            .and_then(|text| compile_ruleset(&text).map_err(|e| format!("{}: {e}", p.display())))
        {
            Ok(r) => r,
            Err(msg) => return malformed(msg),
        },
    };

    let verdict =
        match assess(&twin, &trace, &rules, &peer_positions, &ComplianceConfig::default()) {
            Ok(v) => v,
            Err(e) => return malformed(e.to_string()),
        };

    let body = to_canonical_pretty(&verdict).expect("verdict serializes");
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Err(e) = fs::create_dir_all(dir) {
                eprintln!("error: could not create {}: {e}", dir.display());
                return ExitCode::from(EXIT_PROBLEM);
            }
        }
        if let Err(e) = fs::write(path, &body) {
            eprintln!("error: could not write {}: {e}", path.display());
            return ExitCode::from(EXIT_PROBLEM);
        }
    } else {
        print!("{body}");
    }

    let violations: Vec<_> =
        verdict.per_tick.iter().filter(|t| t.status.is_violation()).collect();
    if violations.is_empty() {
        eprintln!(
            "conforming: {} tick(s), honesty {:.2}, openness {:.2}",
            verdict.per_tick.len(),
            verdict.honesty,
            verdict.openness,
        );
        return ExitCode::SUCCESS;
    }
    eprintln!(
        "non-conforming: {} of {} tick(s) violate (honesty {:.2}, openness {:.2})",
        violations.len(),
        verdict.per_tick.len(),
        verdict.honesty,
        verdict.openness,
    );
    for t in violations {
        let rule = t.rule_id.as_deref().unwrap_or("-");
        let uca = t
            .uca_type
            .and_then(|u| serde_json::to_value(u).ok())
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| "-".into());
        eprintln!("  tick {}: {} rule={rule} uca={uca}", t.tick, status_label(t.status));
    }
    ExitCode::from(EXIT_VIOLATIONS)
}
