//! Locatability stratification and implicit-cue augmentation of reasoning trajectories.
//!
//! Records whose reasoning error trails retrieval by more than the margin are
//! RAG-superior. For those, cue steps mined from the three retrieved candidates are
//! split into implicit (weakly grounded in the query image) and explicit steps; explicit
//! steps are dropped from the cue pool, implicit ones must apply to enough candidates,
//! pass the verifier, and are then merged into the record's standard chain.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locatability::{self, DistancePair, LocatabilityParams, LocatabilityResult, Stratum};
use crate::names::{normalize, EntitySet};
use crate::par::{self, Execution};
use crate::rewards::GeoLocation;

/// Number of retrieved candidates attached to every RAG-superior record.
pub const RAG_CANDIDATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub text: String,
    #[serde(default)]
    pub entities: EntitySet,
    /// Max entity-grounding confidence of this step on each retrieved candidate image.
    #[serde(default)]
    pub confidence_per_candidate: BTreeMap<String, f64>,
    /// Grounding confidence of this step on the record's own image.
    pub own_image_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image_id: String,
    pub l_visual: f64,
    pub ground_truth: GeoLocation,
    #[serde(default)]
    pub d_rag: Option<f64>,
    #[serde(default)]
    pub d_reason: Option<f64>,
    #[serde(default)]
    pub candidate_ids: Vec<String>,
    #[serde(default)]
    pub standard_steps: Vec<ReasoningStep>,
    /// Steps mined from the retrieved candidates, before classification.
    #[serde(default)]
    pub cue_steps: Vec<ReasoningStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<Stratum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_steps: Option<Vec<ReasoningStep>>,
    #[serde(default, flatten, skip_serializing_if = "Option::is_none")]
    pub scores: Option<LocatabilityResult>,
}

impl DatasetRecord {
    pub fn distances(&self) -> Result<DistancePair> {
        match (self.d_rag, self.d_reason) {
            (Some(d_rag), Some(d_reason)) => {
                DistancePair::new(d_rag, d_reason).map_err(|e| Error::record(&self.image_id, e.to_string()))
            }
            _ => Err(Error::record(&self.image_id, "missing d_rag or d_reason")),
        }
    }

    /// Field-level checks that do not depend on the stratum.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::record(&self.image_id, reason));
        if self.image_id.trim().is_empty() {
            return fail("empty image_id".into());
        }
        if !(0.0..=1.0).contains(&self.l_visual) {
            return fail(format!("l_visual {} outside [0, 1]", self.l_visual));
        }
        self.distances()?;
        let ids: HashSet<&str> = self.candidate_ids.iter().map(String::as_str).collect();
        if ids.len() != self.candidate_ids.len() {
            return fail("duplicate candidate ids".into());
        }
        for step in self.standard_steps.iter().chain(&self.cue_steps) {
            if !(0.0..=1.0).contains(&step.own_image_confidence) {
                return fail(format!("step `{}`: own_image_confidence outside [0, 1]", step.text));
            }
            for (id, c) in &step.confidence_per_candidate {
                if !ids.contains(id.as_str()) {
                    return fail(format!("step `{}`: confidence for unknown candidate `{id}`", step.text));
                }
                if !(0.0..=1.0).contains(c) {
                    return fail(format!("step `{}`: confidence outside [0, 1]", step.text));
                }
            }
        }
        Ok(())
    }

    fn check_candidates(&self, stratum: Stratum) -> Result<()> {
        match stratum {
            Stratum::RagSuperior if self.candidate_ids.len() != RAG_CANDIDATES => Err(Error::record(
                &self.image_id,
                format!(
                    "RAG-superior record needs {RAG_CANDIDATES} candidate ids, has {}",
                    self.candidate_ids.len()
                ),
            )),
            Stratum::Standard if !self.candidate_ids.is_empty() => Err(Error::record(
                &self.image_id,
                "standard record must not carry candidate ids",
            )),
            _ => Ok(()),
        }
    }
}

/// A record that did not make it through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub image_id: String,
    pub reason: String,
}

impl Rejection {
    fn from_error(image_id: &str, e: Error) -> Self {
        let reason = match e {
            Error::InvalidRecord { reason, .. } => reason,
            other => other.to_string(),
        };
        Self {
            image_id: image_id.to_string(),
            reason,
        }
    }
}

/// Validates and scores one record, setting `stratum` and `scores`.
pub fn score_record(mut record: DatasetRecord, params: &LocatabilityParams) -> Result<DatasetRecord> {
    record.validate()?;
    let pair = record.distances()?;
    let scores = locatability::score(record.l_visual, pair, params)
        .map_err(|e| Error::record(&record.image_id, e.to_string()))?;
    record.stratum = Some(locatability::stratum_label(pair, params.tau_margin));
    record.scores = Some(scores);
    Ok(record)
}

#[derive(Debug, Clone, Default)]
pub struct Stratified {
    pub standard: Vec<DatasetRecord>,
    pub rag_superior: Vec<DatasetRecord>,
    pub rejected: Vec<Rejection>,
}

/// Partitions records by stratum. Invalid records, duplicate ids and candidate lists
/// that do not fit the stratum are rejected. Both outputs are sorted by image id.
pub fn stratify(records: Vec<DatasetRecord>, params: &LocatabilityParams, exec: Execution) -> Stratified {
    let scored = par::map(exec, &records, |r| {
        score_record(r.clone(), params).and_then(|r| {
            r.check_candidates(r.stratum.expect("scored"))?;
            Ok(r)
        })
    });
    let mut out = Stratified::default();
    let mut seen = HashSet::new();
    for (record, result) in records.iter().zip(scored) {
        if !seen.insert(record.image_id.clone()) {
            out.rejected.push(Rejection {
                image_id: record.image_id.clone(),
                reason: "duplicate image_id".into(),
            });
            continue;
        }
        match result {
            Ok(r) if r.stratum == Some(Stratum::RagSuperior) => out.rag_superior.push(r),
            Ok(r) => out.standard.push(r),
            Err(e) => out.rejected.push(Rejection::from_error(&record.image_id, e)),
        }
    }
    out.standard.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    out.rag_superior.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    out
}

/// Counts and L_opt histogram of a stratification pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratificationSummary {
    pub input: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub standard: usize,
    pub rag_superior: usize,
    pub l_opt_histogram: [u64; HISTOGRAM_BINS],
}

impl Stratified {
    pub fn summary(&self) -> StratificationSummary {
        StratificationSummary {
            input: self.standard.len() + self.rag_superior.len() + self.rejected.len(),
            accepted: self.standard.len() + self.rag_superior.len(),
            rejected: self.rejected.len(),
            standard: self.standard.len(),
            rag_superior: self.rag_superior.len(),
            l_opt_histogram: l_opt_histogram(self.standard.iter().chain(&self.rag_superior)),
        }
    }
}

fn l_opt_histogram<'a>(records: impl Iterator<Item = &'a DatasetRecord>) -> [u64; HISTOGRAM_BINS] {
    let mut hist = [0; HISTOGRAM_BINS];
    for r in records {
        if let Some(scores) = r.scores {
            hist[histogram_bin(scores.l_opt)] += 1;
        }
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepClass {
    /// Not visibly grounded in the image; kept as an implicit cue.
    Implicit,
    /// Directly grounded; removed from the cue pool.
    ExplicitRemoved,
}

/// Implicit iff the step's confidence on its own image is strictly below `threshold`.
pub fn classify_step(step: &ReasoningStep, threshold: f64) -> StepClass {
    if step.own_image_confidence < threshold {
        StepClass::Implicit
    } else {
        StepClass::ExplicitRemoved
    }
}

/// True iff the step applies (confidence `>= threshold`) to at least `min_support` of the
/// record's candidates. Every candidate must have a confidence.
pub fn validate_implicit(
    step: &ReasoningStep,
    candidate_ids: &[String],
    threshold: f64,
    min_support: usize,
) -> Result<bool> {
    let covered: Vec<f64> = candidate_ids
        .iter()
        .filter_map(|id| step.confidence_per_candidate.get(id).copied())
        .collect();
    let needed = candidate_ids.len().max(RAG_CANDIDATES);
    if covered.len() < needed {
        return Err(Error::Coverage {
            step: step.text.clone(),
            found: covered.len(),
            needed,
        });
    }
    Ok(covered.iter().filter(|c| **c >= threshold).count() >= min_support)
}

/// Hook for an external check that an implicit step is a genuine non-visual cue.
pub trait VerificationProvider: Send + Sync {
    fn verify(&self, record: &DatasetRecord, step: &ReasoningStep) -> bool;
}

/// Accepts every step.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl VerificationProvider for AcceptAll {
    fn verify(&self, _: &DatasetRecord, _: &ReasoningStep) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    pub inserted: usize,
    pub dedup_collisions: usize,
}

/// Inserts validated implicit steps into the standard chain.
///
/// Each implicit step goes right after the last standard step sharing an entity with it
/// (after earlier insertions at that anchor), or at the end when nothing is shared.
/// Steps whose normalized text already appears are skipped.
pub fn merge_trajectories(record: &DatasetRecord, implicit: &[ReasoningStep]) -> Result<(DatasetRecord, MergeStats)> {
    if record.stratum != Some(Stratum::RagSuperior) {
        return Err(Error::record(&record.image_id, "merge target is not RAG-superior"));
    }
    let n = record.standard_steps.len();
    let mut seen: HashSet<String> = record.standard_steps.iter().map(|s| normalize(&s.text)).collect();
    // slot i < n: after standard step i; slot n: at the end
    let mut slots: Vec<Vec<&ReasoningStep>> = vec![Vec::new(); n + 1];
    let mut stats = MergeStats::default();
    for step in implicit {
        if !seen.insert(normalize(&step.text)) {
            stats.dedup_collisions += 1;
            continue;
        }
        let anchor = record
            .standard_steps
            .iter()
            .rposition(|s| !s.entities.is_disjoint(&step.entities))
            .unwrap_or(n);
        slots[anchor].push(step);
        stats.inserted += 1;
    }
    let mut merged = Vec::with_capacity(n + stats.inserted);
    for (i, slot) in slots.into_iter().enumerate() {
        if i < n {
            merged.push(record.standard_steps[i].clone());
        }
        merged.extend(slot.into_iter().cloned());
    }
    let mut out = record.clone();
    out.augmented_steps = Some(merged);
    Ok((out, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationParams {
    pub locatability: LocatabilityParams,
    /// Own-image confidence below which a cue step is implicit.
    pub implicit_threshold: f64,
    /// Candidate confidence at or above which a step applies to that candidate.
    pub candidate_threshold: f64,
    pub min_support: usize,
}

impl Default for CurationParams {
    fn default() -> Self {
        Self {
            locatability: LocatabilityParams::default(),
            implicit_threshold: 0.3,
            candidate_threshold: 0.3,
            min_support: 2,
        }
    }
}

/// Per-record bookkeeping of the augmentation pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordAudit {
    pub image_id: String,
    pub stratum: Option<Stratum>,
    pub standard_steps: usize,
    pub cue_steps: usize,
    pub implicit: usize,
    pub explicit_removed: usize,
    pub validated: usize,
    pub unsupported: usize,
    pub coverage_errors: usize,
    pub verifier_rejected: usize,
    pub dedup_collisions: usize,
    pub augmented_steps: usize,
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub input: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub standard: usize,
    pub rag_superior: usize,
    pub cue_steps: usize,
    pub implicit: usize,
    pub explicit_removed: usize,
    pub validated: usize,
    pub unsupported: usize,
    pub coverage_errors: usize,
    pub verifier_rejected: usize,
    pub dedup_collisions: usize,
    pub augmented_steps: usize,
    /// Counts of accepted records by L_opt over 10 equal-width bins of `[0, 1]`;
    /// the last bin is closed.
    pub l_opt_histogram: [u64; HISTOGRAM_BINS],
}

#[derive(Debug, Clone, Default)]
pub struct CurationOutput {
    pub standard: Vec<DatasetRecord>,
    pub rag_superior: Vec<DatasetRecord>,
    pub rejected: Vec<Rejection>,
    pub audit: Vec<RecordAudit>,
    pub summary: CurationSummary,
}

pub fn histogram_bin(l_opt: f64) -> usize {
    ((l_opt * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

fn augment(
    record: &DatasetRecord,
    params: &CurationParams,
    verifier: &dyn VerificationProvider,
) -> Result<(DatasetRecord, RecordAudit)> {
    let mut audit = RecordAudit {
        image_id: record.image_id.clone(),
        stratum: record.stratum,
        standard_steps: record.standard_steps.len(),
        cue_steps: record.cue_steps.len(),
        ..Default::default()
    };
    let mut accepted = Vec::new();
    for step in &record.cue_steps {
        if classify_step(step, params.implicit_threshold) == StepClass::ExplicitRemoved {
            audit.explicit_removed += 1;
            continue;
        }
        audit.implicit += 1;
        match validate_implicit(
            step,
            &record.candidate_ids,
            params.candidate_threshold,
            params.min_support,
        ) {
            Err(Error::Coverage { .. }) => audit.coverage_errors += 1,
            Err(e) => return Err(e),
            Ok(false) => audit.unsupported += 1,
            Ok(true) if !verifier.verify(record, step) => audit.verifier_rejected += 1,
            Ok(true) => {
                audit.validated += 1;
                accepted.push(step.clone());
            }
        }
    }
    let (merged, stats) = merge_trajectories(record, &accepted)?;
    audit.dedup_collisions = stats.dedup_collisions;
    audit.augmented_steps = merged.augmented_steps.as_ref().map_or(0, Vec::len);
    Ok((merged, audit))
}

/// Full pipeline: score, stratify, then augment every RAG-superior record.
///
/// Output lists and the audit are ordered by image id, so the result does not depend
/// on the input order of distinct records or on the execution mode.
pub fn curate(
    records: Vec<DatasetRecord>,
    params: &CurationParams,
    verifier: &dyn VerificationProvider,
    exec: Execution,
) -> Result<CurationOutput> {
    let input = records.len();
    let strata = stratify(records, &params.locatability, exec);
    let augmented = par::map(exec, &strata.rag_superior, |r| augment(r, params, verifier));

    let mut out = CurationOutput {
        rejected: strata.rejected,
        ..Default::default()
    };
    let mut audit = Vec::new();
    for r in &strata.standard {
        audit.push(RecordAudit {
            image_id: r.image_id.clone(),
            stratum: r.stratum,
            standard_steps: r.standard_steps.len(),
            cue_steps: r.cue_steps.len(),
            ..Default::default()
        });
    }
    for result in augmented {
        let (record, a) = result?;
        audit.push(a);
        out.rag_superior.push(record);
    }
    out.standard = strata.standard;
    audit.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut s = CurationSummary {
        input,
        rejected: out.rejected.len(),
        standard: out.standard.len(),
        rag_superior: out.rag_superior.len(),
        ..Default::default()
    };
    s.accepted = s.standard + s.rag_superior;
    for a in &audit {
        s.cue_steps += a.cue_steps;
        s.implicit += a.implicit;
        s.explicit_removed += a.explicit_removed;
        s.validated += a.validated;
        s.unsupported += a.unsupported;
        s.coverage_errors += a.coverage_errors;
        s.verifier_rejected += a.verifier_rejected;
        s.dedup_collisions += a.dedup_collisions;
        s.augmented_steps += a.augmented_steps;
    }
    s.l_opt_histogram = l_opt_histogram(out.standard.iter().chain(&out.rag_superior));
    out.summary = s;
    out.audit = audit;
    Ok(out)
}
