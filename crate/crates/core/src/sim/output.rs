//! Serialization of a finished run into a stable artifact directory.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json                 run identity, config hash, file inventory
//! traces/<drone>.jsonl          one canonical telemetry record per line
//! verdicts/<obs>__<subj>.json   whole-run compliance verdicts per pair
//! ledgers/<drone>.json          final trust ledger per drone
//! ledger_series.csv             trust scores at every window boundary
//! plans.jsonl                   orchestrator plan log (when enabled)
//! ```
//!
//! All JSON is canonical (sorted keys, shortest round-trip floats), so
//! identical runs produce byte-identical artifacts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical_json::{to_canonical_line, to_canonical_pretty};
use crate::dt_model::serialize_twin;
use crate::trust::Decision;

use super::runner::SimulationResult;
use super::SimError;

/// The run inventory written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub seed: u64,
    pub tool_version: String,
    /// SHA-256 of the canonical resolved scenario document. Two manifests
    /// with the same hash describe runs of the same configuration.
    pub config_hash: String,
    /// Artifact files, relative to the manifest, sorted.
    pub outputs: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), SimError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn decision_label(decision: Decision) -> &'static str {
    match decision {
        Decision::Unknown => "unknown",
        Decision::Trusted => "trusted",
        Decision::Untrusted => "untrusted",
    }
}

/// Hash of the exact configuration a run resolved to.
pub(super) fn config_hash(result: &SimulationResult) -> String {
    let canonical = to_canonical_line(&result.scenario).expect("scenario serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Write every artifact of a finished run under `out_dir` and return the
/// manifest (also written there as `manifest.json`).
pub fn write_outputs(result: &SimulationResult, out_dir: &Path) -> Result<RunManifest, SimError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut outputs: Vec<String> = Vec::new();

    for (id, records) in &result.traces {
        let rel = format!("traces/{id}.jsonl");
        let mut lines = String::new();
        for record in records {
            lines.push_str(&to_canonical_line(record).expect("telemetry serializes"));
            lines.push('\n');
        }
        write_file(&out_dir.join(&rel), &lines)?;
        outputs.push(rel);
    }

    for (id, twin) in &result.twins {
        let rel = format!("twins/{id}.json");
        write_file(&out_dir.join(&rel), &serialize_twin(twin))?;
        outputs.push(rel);
    }

    for (observer, subjects) in &result.observers {
        for subject in subjects {
            let Some(verdict) = result.verdicts.get(subject) else { continue };
            let rel = format!("verdicts/{observer}__{subject}.json");
            let body = to_canonical_pretty(verdict).expect("verdict serializes");
            write_file(&out_dir.join(&rel), &body)?;
            outputs.push(rel);
        }
    }

    for (id, export) in &result.ledgers {
        let rel = format!("ledgers/{id}.json");
        let body = to_canonical_pretty(export).expect("ledger serializes");
        write_file(&out_dir.join(&rel), &body)?;
        outputs.push(rel);
    }

    {
        let mut rows = result.series.clone();
        rows.sort_by(|a, b| {
            (a.window_end_tick, &a.trustor, &a.trustee)
                .cmp(&(b.window_end_tick, &b.trustor, &b.trustee))
        });
        let mut csv = String::from("window_end_tick,trustor,trustee,direct,indirect,combined,decision\n");
        for row in &rows {
            csv.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{}\n",
                row.window_end_tick,
                row.trustor,
                row.trustee,
                row.direct,
                row.indirect,
                row.combined,
                decision_label(row.decision),
            ));
        }
        write_file(&out_dir.join("ledger_series.csv"), &csv)?;
        outputs.push("ledger_series.csv".into());
    }

    if result.scenario.orchestrator.enabled {
        let mut lines = String::new();
        for entry in &result.plans {
            lines.push_str(&to_canonical_line(entry).expect("plan log serializes"));
            lines.push('\n');
        }
        write_file(&out_dir.join("plans.jsonl"), &lines)?;
        outputs.push("plans.jsonl".into());
    }

    outputs.sort();
    let manifest = RunManifest {
        scenario: result.scenario.name.clone(),
        seed: result.scenario.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(result),
        outputs,
    };
    let body = to_canonical_pretty(&manifest).expect("manifest serializes");
    write_file(&out_dir.join("manifest.json"), &body)?;
    Ok(manifest)
}
