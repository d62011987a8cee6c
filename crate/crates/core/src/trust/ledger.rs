//! The per-agent trust ledger: evidence in, scores and decisions out.

use super::{
    aggregate_indirect, combine, direct_score, update_direct, DirectEvidence, ReputationReport,
    TrustConfig, TrustError,
};
use crate::compliance::ComplianceVerdict;
use crate::dt_model::DroneId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Trust standing of one subject from the ledger owner's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Unknown,
    Trusted,
    Untrusted,
}

/// Everything the owner knows about one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTrust {
    pub evidence: DirectEvidence,
    pub reports: Vec<ReputationReport>,
    pub direct: f64,
    pub indirect: f64,
    pub combined: f64,
    pub decision: Decision,
}

impl Default for SubjectTrust {
    fn default() -> Self {
        SubjectTrust {
            evidence: DirectEvidence::default(),
            reports: Vec::new(),
            direct: 0.5,
            indirect: 0.5,
            combined: 0.5,
            decision: Decision::Unknown,
        }
    }
}

/// One agent's trust state about every subject it has evidence or reports
/// for. Only the owning agent mutates its ledger; everything derived
/// (scores, decisions) is recomputed deterministically from the stored
/// evidence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrustLedger {
    owner: DroneId,
    config: TrustConfig,
    subjects: BTreeMap<DroneId, SubjectTrust>,
}

impl TrustLedger {
    pub fn new(owner: DroneId, config: TrustConfig) -> Result<Self, TrustError> {
        config.validate()?;
        Ok(TrustLedger { owner, config, subjects: BTreeMap::new() })
    }

    pub fn owner(&self) -> &DroneId {
        &self.owner
    }

    pub fn config(&self) -> &TrustConfig {
        &self.config
    }

    pub fn subject(&self, id: &DroneId) -> Option<&SubjectTrust> {
        self.subjects.get(id)
    }

    pub fn subjects(&self) -> impl Iterator<Item = (&DroneId, &SubjectTrust)> {
        self.subjects.iter()
    }

    /// The current decision about a subject; strangers are `Unknown`.
    pub fn decision(&self, id: &DroneId) -> Decision {
        self.subjects.get(id).map_or(Decision::Unknown, |s| s.decision)
    }

    /// The current combined score for a subject; strangers sit at the
    /// uninformed prior.
    pub fn combined(&self, id: &DroneId) -> f64 {
        self.subjects.get(id).map_or(0.5, |s| s.combined)
    }

    /// Snapshot of combined scores, used to weight reporters.
    fn trust_snapshot(&self) -> BTreeMap<DroneId, f64> {
        self.subjects.iter().map(|(id, s)| (id.clone(), s.combined)).collect()
    }

    fn refresh(
        subject: &mut SubjectTrust,
        snapshot: &BTreeMap<DroneId, f64>,
        config: &TrustConfig,
    ) {
        subject.direct = direct_score(&subject.evidence, config);
        subject.indirect = aggregate_indirect(&subject.reports, snapshot, config);
        subject.combined = combine(subject.direct, subject.indirect, config.weights())
            .expect("ledger construction validates the weights");
        subject.decision =
            if subject.evidence.total_windows() == 0 && subject.reports.is_empty() {
                Decision::Unknown
            } else if subject.combined >= config.threshold {
                Decision::Trusted
            } else {
                Decision::Untrusted
            };
    }

    /// Fold one evaluation-window verdict about `subject` into the ledger;
    /// returns the subject's new combined score.
    pub fn record_window(&mut self, subject: &DroneId, verdict: &ComplianceVerdict) -> f64 {
        let snapshot = self.trust_snapshot();
        let entry = self.subjects.entry(subject.clone()).or_default();
        let (next, _) = update_direct(&entry.evidence, verdict, &self.config);
        entry.evidence = next;
        Self::refresh(entry, &snapshot, &self.config);
        entry.combined
    }

    /// Record an encounter window in which the subject declared nothing at
    /// all — e.g. it refused to hand over its behaviour document. Counts as
    /// a maximally opaque negative window.
    pub fn record_opaque_window(&mut self, subject: &DroneId) -> f64 {
        let snapshot = self.trust_snapshot();
        let entry = self.subjects.entry(subject.clone()).or_default();
        entry.evidence.negative += 1;
        entry.evidence.last_honesty = 0.0;
        entry.evidence.last_openness = 0.0;
        Self::refresh(entry, &snapshot, &self.config);
        entry.combined
    }

    /// Store a third-party report. Reports about the owner itself are
    /// dropped (an agent does not score itself), and self-vouching reports
    /// are rejected.
    pub fn ingest_report(&mut self, report: ReputationReport) -> Result<(), TrustError> {
        report.validate()?;
        if report.reporter_id == report.subject_id {
            return Err(TrustError::InvalidReport {
                reporter: report.reporter_id,
                reason: "a reporter cannot vouch for itself".into(),
            });
        }
        if report.subject_id == self.owner {
            return Ok(());
        }
        let snapshot = self.trust_snapshot();
        let entry = self.subjects.entry(report.subject_id.clone()).or_default();
        entry.reports.push(report);
        Self::refresh(entry, &snapshot, &self.config);
        Ok(())
    }

    /// Re-derive every subject's scores from stored evidence, dropping
    /// reports that have aged out. All reporter weights come from one
    /// snapshot taken on entry, so subject iteration order cannot matter.
    pub fn recompute(&mut self, now_tick: u64) {
        if let Some(max_age) = self.config.max_report_age_ticks {
            for subject in self.subjects.values_mut() {
                subject
                    .reports
                    .retain(|r| now_tick.saturating_sub(r.tick_issued) <= max_age);
            }
        }
        let snapshot = self.trust_snapshot();
        for subject in self.subjects.values_mut() {
            Self::refresh(subject, &snapshot, &self.config);
        }
    }

    /// Publish the owner's first-hand opinion of a subject. The score is
    /// the subject's *direct* score only — hearsay is never re-exported, so
    /// rumors cannot feed back — weighted by the number of windows behind
    /// it. Errors when the owner has no evaluated windows for the subject.
    pub fn publish_report(
        &self,
        subject: &DroneId,
        tick: u64,
    ) -> Result<ReputationReport, TrustError> {
        let entry = self
            .subjects
            .get(subject)
            .ok_or_else(|| TrustError::NoEvidence(subject.clone()))?;
        let windows = entry.evidence.total_windows();
        if windows == 0 {
            return Err(TrustError::NoEvidence(subject.clone()));
        }
        Ok(ReputationReport {
            reporter_id: self.owner.clone(),
            subject_id: subject.clone(),
            score: direct_score(&entry.evidence, &self.config),
            window_count: windows,
            tick_issued: tick,
        })
    }

    pub fn export(&self) -> LedgerExport {
        LedgerExport {
            owner_id: self.owner.clone(),
            subjects: self
                .subjects
                .iter()
                .map(|(id, s)| SubjectExport {
                    id: id.clone(),
                    positive_windows: s.evidence.positive,
                    negative_windows: s.evidence.negative,
                    report_count: s.reports.len() as u64,
                    direct: s.direct,
                    indirect: s.indirect,
                    combined: s.combined,
                    decision: s.decision,
                })
                .collect(),
        }
    }
}

/// Flattened, serialization-friendly view of a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerExport {
    pub owner_id: DroneId,
    pub subjects: Vec<SubjectExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectExport {
    pub id: DroneId,
    pub positive_windows: u64,
    pub negative_windows: u64,
    pub report_count: u64,
    pub direct: f64,
    pub indirect: f64,
    pub combined: f64,
    pub decision: Decision,
}
