//! Manufacturer-name rules and part-number recovery for the catalog.
//!
//! The rule half asks the model to cluster every distinct manufacturer
//! spelling, checks its answer against the input names and folds reviewer
//! decisions into a [`RuleTable`]. The part-number half pulls a PN out of
//! each card's notes, cross-checks it against the component database and
//! queues anything it cannot verify for a human.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{canonical_manufacturer, DomainError, PlmComponent, QualificationCard, RuleTable};
use crate::llm::{LlmError, LlmGateway, LlmRequest};

pub const CHECKPOINT_EVERY: usize = 100;

/// Files a cleaning run leaves in its output directory.
pub mod files {
    pub const RULES_CSV: &str = "rules.csv";
    pub const RULES_JSON: &str = "rules.json";
    pub const QC_AUGMENTED: &str = "qc_augmented.csv";
    pub const REVIEW_QUEUE: &str = "review_queue.json";
    pub const DIAGNOSTICS: &str = "diagnostics.json";
    pub const CHECKPOINT: &str = "pn.checkpoint.json";
}

#[derive(Debug, Error)]
pub enum CleaningError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("LLM transport failed after {done} cards; progress saved to {}", checkpoint.display())]
    Interrupted {
        done: usize,
        checkpoint: PathBuf,
        #[source]
        source: LlmError,
    },
    #[error("unknown rule id {0}")]
    UnknownRule(u32),
    #[error("unknown qualification `{0}`")]
    UnknownQualification(String),
    #[error("rules {first} and {second} both claim `{name}`")]
    Overlap { first: u32, second: u32, name: String },
    #[error("invalid rule {id}: {reason}")]
    InvalidRule { id: u32, reason: String },
    #[error(transparent)]
    RuleTable(#[from] DomainError),
    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleState {
    Proposed,
    Accepted,
    Edited,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationRule {
    pub id: u32,
    pub variants: BTreeSet<String>,
    pub canonical: String,
    pub state: RuleState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor_note: Option<String>,
}

impl NormalizationRule {
    pub fn proposed(id: u32, canonical: impl Into<String>, variants: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            id,
            canonical: canonical.into(),
            variants: variants.into_iter().map(Into::into).collect(),
            state: RuleState::Proposed,
            editor_note: None,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, RuleState::Accepted | RuleState::Edited)
    }

    fn check_shape(&self) -> Result<(), CleaningError> {
        if self.variants.is_empty() {
            return Err(CleaningError::InvalidRule {
                id: self.id,
                reason: "no variants".into(),
            });
        }
        if self.canonical.trim().is_empty() {
            return Err(CleaningError::InvalidRule {
                id: self.id,
                reason: "empty canonical name".into(),
            });
        }
        Ok(())
    }
}

/// Union of trimmed raw manufacturer names over both sources.
pub fn extract_unique_manufacturers(plm: &[PlmComponent], qc: &[QualificationCard]) -> BTreeSet<String> {
    plm.iter()
        .map(|c| c.manufacturer_name.as_str())
        .chain(qc.iter().map(|q| q.manufacturer_name.as_str()))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleProposal {
    pub rules: Vec<NormalizationRule>,
    pub diagnostics: Vec<String>,
}

/// One model call over all names; a non-compliant answer yields no rules.
pub fn propose_rules(names: &BTreeSet<String>, gateway: &LlmGateway) -> Result<RuleProposal, CleaningError> {
    let mut out = RuleProposal::default();
    if names.is_empty() {
        out.diagnostics.push("no manufacturer names to cluster".into());
        return Ok(out);
    }
    let list: Vec<String> = names.iter().cloned().collect();
    let response = gateway.complete(&LlmRequest::normalization_rules(&list))?;
    let parsed = match (response.compliant, response.parsed) {
        (true, Some(v)) => v,
        _ => {
            out.diagnostics.push(format!(
                "rule proposal was not usable after {} attempt(s): {}",
                response.attempts,
                response.violation.unwrap_or_else(|| "empty reply".into())
            ));
            return Ok(out);
        }
    };
    let items = parsed.get("rules").and_then(Value::as_array).cloned().unwrap_or_default();
    for item in items {
        let canonical = item.get("canonical").and_then(Value::as_str).unwrap_or("").trim().to_string();
        let variants: BTreeSet<String> = item
            .get("variants")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        let id = out.rules.len() as u32 + 1;
        let rule = NormalizationRule::proposed(id, canonical, variants);
        match rule.check_shape() {
            Ok(()) => out.rules.push(rule),
            Err(e) => out.diagnostics.push(format!("skipped proposed rule: {e}")),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Variant names absent from the input.
    pub hallucinated: BTreeSet<String>,
    /// Input names covered by no rule and equal to no canonical name.
    pub missing: BTreeSet<String>,
    /// Names claimed by two rules, as `(first rule, second rule, name)`.
    pub overlaps: Vec<(u32, u32, String)>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.hallucinated.is_empty() && self.missing.is_empty() && self.overlaps.is_empty()
    }
}

/// Validates every non-rejected rule against the input names.
pub fn validate_rules(rules: &[NormalizationRule], names: &BTreeSet<String>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut owner: BTreeMap<&str, u32> = BTreeMap::new();
    let live: Vec<&NormalizationRule> = rules.iter().filter(|r| r.state != RuleState::Rejected).collect();
    for rule in &live {
        for v in &rule.variants {
            if !names.contains(v) {
                report.hallucinated.insert(v.clone());
            }
            match owner.get(v.as_str()) {
                Some(&first) if first != rule.id => report.overlaps.push((first, rule.id, v.clone())),
                Some(_) => {}
                None => {
                    owner.insert(v, rule.id);
                }
            }
        }
    }
    let canonicals: BTreeSet<&str> = live.iter().map(|r| r.canonical.as_str()).collect();
    for name in names {
        if !owner.contains_key(name.as_str()) && !canonicals.contains(name.as_str()) {
            report.missing.insert(name.clone());
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RuleAction {
    Accept,
    Reject,
    Edit {
        canonical: String,
        variants: BTreeSet<String>,
    },
    /// Replaces the rule by several disjoint ones; the first part keeps the
    /// id, the others get fresh ids.
    Split { parts: Vec<(String, BTreeSet<String>)> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDecision {
    pub rule_id: u32,
    #[serde(flatten)]
    pub action: RuleAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RuleDecision {
    pub fn new(rule_id: u32, action: RuleAction) -> Self {
        Self {
            rule_id,
            action,
            note: None,
        }
    }
}

/// Folds decisions into the rules in order and returns the updated rules
/// with the resulting table. Nothing changes if any step fails.
pub fn apply_decisions(
    rules: &[NormalizationRule],
    decisions: &[RuleDecision],
) -> Result<(Vec<NormalizationRule>, RuleTable), CleaningError> {
    let mut out = rules.to_vec();
    for d in decisions {
        let pos = out
            .iter()
            .position(|r| r.id == d.rule_id)
            .ok_or(CleaningError::UnknownRule(d.rule_id))?;
        let rule = &mut out[pos];
        if d.note.is_some() {
            rule.editor_note = d.note.clone();
        }
        match &d.action {
            RuleAction::Accept => rule.state = RuleState::Accepted,
            RuleAction::Reject => rule.state = RuleState::Rejected,
            RuleAction::Edit { canonical, variants } => {
                rule.canonical = canonical.trim().to_string();
                rule.variants = variants.iter().map(|v| v.trim().to_string()).collect();
                rule.state = RuleState::Edited;
                rule.check_shape()?;
            }
            RuleAction::Split { parts } => {
                let Some(((first_canonical, first_variants), rest)) = parts.split_first() else {
                    return Err(CleaningError::InvalidRule {
                        id: d.rule_id,
                        reason: "split into zero parts".into(),
                    });
                };
                rule.canonical = first_canonical.trim().to_string();
                rule.variants = first_variants.clone();
                rule.state = RuleState::Edited;
                rule.check_shape()?;
                let note = rule.editor_note.clone();
                let mut next = out.iter().map(|r| r.id).max().unwrap_or(0);
                for (canonical, variants) in rest {
                    next += 1;
                    let mut r = NormalizationRule::proposed(next, canonical.trim(), variants.iter().cloned());
                    r.state = RuleState::Edited;
                    r.editor_note = note.clone();
                    r.check_shape()?;
                    out.push(r);
                }
            }
        }
    }
    let table = rule_table(&out)?;
    Ok((out, table))
}

/// Table rows for every variant of every accepted or edited rule.
pub fn rule_table(rules: &[NormalizationRule]) -> Result<RuleTable, CleaningError> {
    let mut owner: BTreeMap<&str, u32> = BTreeMap::new();
    let mut rows = Vec::new();
    for rule in rules.iter().filter(|r| r.is_active()) {
        for v in &rule.variants {
            if let Some(&first) = owner.get(v.as_str()) {
                if first != rule.id {
                    return Err(CleaningError::Overlap {
                        first,
                        second: rule.id,
                        name: v.clone(),
                    });
                }
            }
            owner.insert(v, rule.id);
            rows.push((v.clone(), rule.canonical.clone()));
        }
    }
    Ok(RuleTable::from_rows(rows)?)
}

/// Accepts every proposed rule that touches no validation finding; the
/// others stay proposed for a reviewer.
pub fn auto_accept(rules: &[NormalizationRule], report: &ValidationReport) -> Vec<NormalizationRule> {
    let flagged: BTreeSet<u32> = report.overlaps.iter().flat_map(|(a, b, _)| [*a, *b]).collect();
    rules
        .iter()
        .cloned()
        .map(|mut r| {
            let clean = !flagged.contains(&r.id) && r.variants.iter().all(|v| !report.hallucinated.contains(v));
            if r.state == RuleState::Proposed && clean {
                r.state = RuleState::Accepted;
                r.editor_note = Some("accepted automatically: passed validation".into());
            }
            r
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReviewReason {
    NotExtracted,
    NotInPlm,
    AttributeMismatch,
}

impl ReviewReason {
    pub fn code(self) -> &'static str {
        match self {
            ReviewReason::NotExtracted => "not_extracted",
            ReviewReason::NotInPlm => "not_in_plm",
            ReviewReason::AttributeMismatch => "attribute_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnReviewItem {
    pub qual_number: String,
    pub candidate_pn: Option<String>,
    pub reason: ReviewReason,
    pub resolved_pn: Option<String>,
}

impl PnReviewItem {
    pub fn is_pending(&self) -> bool {
        self.resolved_pn.is_none()
    }
}

/// Orders ids like `qc2` before `qc10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        (&s[..cut], s[cut..].parse().ok())
    }
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(pb).then(na.cmp(&nb)).then_with(|| a.cmp(b))
}

/// Part-number lookup into the component database with the cross-check
/// against a card's package, subpackage and canonical manufacturer.
pub struct PlmLookup<'a> {
    by_pn: HashMap<&'a str, Vec<&'a PlmComponent>>,
    rules: &'a RuleTable,
}

impl<'a> PlmLookup<'a> {
    pub fn new(plm: &'a [PlmComponent], rules: &'a RuleTable) -> Self {
        let mut by_pn: HashMap<&str, Vec<&PlmComponent>> = HashMap::new();
        for c in plm {
            by_pn.entry(c.part_number.as_str()).or_default().push(c);
        }
        Self { by_pn, rules }
    }

    pub fn cross_check(&self, card: &QualificationCard, pn: &str) -> Result<(), ReviewReason> {
        let rows = self.by_pn.get(pn.trim()).ok_or(ReviewReason::NotInPlm)?;
        let mfr = canonical_manufacturer(&card.manufacturer_name, self.rules);
        let agrees = rows.iter().any(|c| {
            c.package_code == card.package_code
                && c.subpackage_code == card.subpackage_code
                && canonical_manufacturer(&c.manufacturer_name, self.rules) == mfr
        });
        if agrees {
            Ok(())
        } else {
            Err(ReviewReason::AttributeMismatch)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub pn: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub additional: Vec<String>,
    #[serde(default = "yes")]
    pub compliant: bool,
}

fn yes() -> bool {
    true
}

/// Asks the gateway for the PN in one note.
pub fn extract_pn(note: &str, gateway: &LlmGateway) -> Result<Extraction, LlmError> {
    let response = gateway.complete(&LlmRequest::pn_extraction(note))?;
    let parsed = response.parsed.filter(|_| response.compliant);
    let pn = parsed
        .as_ref()
        .and_then(|v| v.get("pn"))
        .and_then(Value::as_str)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let additional = parsed
        .as_ref()
        .and_then(|v| v.get("additional"))
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default();
    Ok(Extraction {
        pn,
        additional,
        compliant: response.compliant,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnPipelineConfig {
    pub concurrency: usize,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl Default for PnPipelineConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            checkpoint: None,
            checkpoint_every: CHECKPOINT_EVERY,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub extractions: BTreeMap<String, Extraction>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, CleaningError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| CleaningError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CleaningError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CleaningError> {
        let err = |e: std::io::Error| CleaningError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self).expect("checkpoint serializes")).map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PnOutcome {
    /// Cards in input order; verified ones carry `part_number`.
    pub cards: Vec<QualificationCard>,
    /// One pending item per unverified card, in qualification-number order.
    pub review: Vec<PnReviewItem>,
    pub diagnostics: Vec<String>,
}

impl PnOutcome {
    pub fn flagged_fraction(&self) -> f64 {
        if self.cards.is_empty() {
            0.0
        } else {
            self.review.iter().filter(|r| r.is_pending()).count() as f64 / self.cards.len() as f64
        }
    }
}

/// Extracts, cross-checks and writes part numbers into the cards.
pub fn run_pn_pipeline(
    qc: &[QualificationCard],
    plm: &[PlmComponent],
    rules: &RuleTable,
    gateway: &LlmGateway,
    cfg: &PnPipelineConfig,
) -> Result<PnOutcome, CleaningError> {
    let mut order: Vec<usize> = (0..qc.len()).collect();
    order.sort_by(|&a, &b| natural_cmp(&qc[a].number, &qc[b].number));
    let mut checkpoint = match &cfg.checkpoint {
        Some(p) => Checkpoint::load(p)?,
        None => Checkpoint::default(),
    };
    let todo: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| !checkpoint.extractions.contains_key(&qc[i].number))
        .collect();
    let batch = cfg.checkpoint_every.max(1);
    for chunk in todo.chunks(batch) {
        let results = extract_batch(qc, chunk, gateway, cfg.concurrency);
        let mut failure = None;
        for (i, r) in chunk.iter().zip(results) {
            match r {
                Ok(x) => {
                    checkpoint.extractions.insert(qc[*i].number.clone(), x);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(p) = &cfg.checkpoint {
            checkpoint.save(p)?;
        }
        if let Some(source) = failure {
            return Err(match &cfg.checkpoint {
                Some(p) => CleaningError::Interrupted {
                    done: checkpoint.extractions.len(),
                    checkpoint: p.clone(),
                    source,
                },
                None => CleaningError::Llm(source),
            });
        }
    }

    let lookup = PlmLookup::new(plm, rules);
    let mut out = PnOutcome {
        cards: qc.to_vec(),
        ..PnOutcome::default()
    };
    for &i in &order {
        let card = &qc[i];
        let x = &checkpoint.extractions[&card.number];
        if !x.compliant {
            out.diagnostics.push(format!("{}: extraction reply was not schema-compliant", card.number));
        }
        if !x.additional.is_empty() {
            out.diagnostics.push(format!(
                "{}: kept first PN, ignored {}",
                card.number,
                x.additional.join(", ")
            ));
        }
        let verdict = match &x.pn {
            None => Err(ReviewReason::NotExtracted),
            Some(pn) => lookup.cross_check(card, pn),
        };
        match verdict {
            Ok(()) => out.cards[i].part_number = x.pn.clone(),
            Err(reason) => {
                out.cards[i].part_number = None;
                out.review.push(PnReviewItem {
                    qual_number: card.number.clone(),
                    candidate_pn: x.pn.clone(),
                    reason,
                    resolved_pn: None,
                });
            }
        }
    }
    Ok(out)
}

fn extract_batch(
    qc: &[QualificationCard],
    chunk: &[usize],
    gateway: &LlmGateway,
    concurrency: usize,
) -> Vec<Result<Extraction, LlmError>> {
    let workers = concurrency.clamp(1, chunk.len().max(1));
    if workers == 1 {
        return chunk.iter().map(|&i| extract_pn(&qc[i].notes, gateway)).collect();
    }
    let per = chunk.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = chunk
            .chunks(per)
            .map(|part| s.spawn(move || part.iter().map(|&i| extract_pn(&qc[i].notes, gateway)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("extraction worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Resolution {
    Resolved(QualificationCard),
    StillPending(ReviewReason),
}

/// Applies a reviewer-supplied PN after the same cross-check the pipeline
/// uses. A failing PN leaves the item pending with its reason updated.
pub fn resolve_review(
    queue: &mut [PnReviewItem],
    cards: &mut [QualificationCard],
    qual_number: &str,
    pn: &str,
    plm: &[PlmComponent],
    rules: &RuleTable,
) -> Result<Resolution, CleaningError> {
    let item = queue
        .iter_mut()
        .find(|r| r.qual_number == qual_number)
        .ok_or_else(|| CleaningError::UnknownQualification(qual_number.to_string()))?;
    let card = cards
        .iter_mut()
        .find(|c| c.number == qual_number)
        .ok_or_else(|| CleaningError::UnknownQualification(qual_number.to_string()))?;
    let pn = pn.trim();
    match PlmLookup::new(plm, rules).cross_check(card, pn) {
        Ok(()) => {
            item.resolved_pn = Some(pn.to_string());
            card.part_number = Some(pn.to_string());
            Ok(Resolution::Resolved(card.clone()))
        }
        Err(reason) => {
            if item.is_pending() {
                item.reason = reason;
                item.candidate_pn = Some(pn.to_string());
            }
            Ok(Resolution::StillPending(reason))
        }
    }
}

/// Everything one cleaning run produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningRun {
    pub names: BTreeSet<String>,
    pub rules: Vec<NormalizationRule>,
    pub validation: ValidationReport,
    #[serde(skip)]
    pub rule_table: RuleTable,
    pub pn: PnOutcome,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleaningConfig {
    /// Accept every rule without validation findings; otherwise all rules
    /// stay proposed and the table is empty.
    pub auto_accept: bool,
    pub pipeline: PnPipelineConfig,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            auto_accept: true,
            pipeline: PnPipelineConfig::default(),
        }
    }
}

/// Names, rules, validation, table, then part numbers.
pub fn run_cleaning(
    plm: &[PlmComponent],
    qc: &[QualificationCard],
    gateway: &LlmGateway,
    cfg: &CleaningConfig,
) -> Result<CleaningRun, CleaningError> {
    let names = extract_unique_manufacturers(plm, qc);
    let proposal = propose_rules(&names, gateway)?;
    let validation = validate_rules(&proposal.rules, &names);
    let rules = if cfg.auto_accept {
        auto_accept(&proposal.rules, &validation)
    } else {
        proposal.rules
    };
    let rule_table = rule_table(&rules)?;
    let pn = run_pn_pipeline(qc, plm, &rule_table, gateway, &cfg.pipeline)?;
    let mut diagnostics = proposal.diagnostics;
    diagnostics.extend(validation.hallucinated.iter().map(|n| format!("hallucinated manufacturer name `{n}`")));
    diagnostics.extend(
        validation
            .overlaps
            .iter()
            .map(|(a, b, n)| format!("rules {a} and {b} both claim `{n}`")),
    );
    Ok(CleaningRun {
        names,
        rules,
        validation,
        rule_table,
        pn,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut ids = vec!["qc10", "qc2", "qc1", "a3", "qc"];
        ids.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(ids, ["a3", "qc", "qc1", "qc2", "qc10"]);
    }

    #[test]
    fn decision_serde_shape() {
        let d = RuleDecision::new(3, RuleAction::Accept);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v, serde_json::json!({"rule_id": 3, "action": "accept"}));
        let e: RuleDecision = serde_json::from_value(serde_json::json!({
            "rule_id": 1, "action": "edit", "canonical": "ABC", "variants": ["ABC", "ABC Corp"]
        }))
        .unwrap();
        assert!(matches!(e.action, RuleAction::Edit { .. }));
    }
}
