//! Materialized review state: the loaded data directory plus every logged
//! decision folded over it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qualkg::cleaning::{
    apply_decisions, files, resolve_review, rule_table, CleaningError, NormalizationRule, PnReviewItem, Resolution,
    RuleAction, RuleDecision, RuleState,
};
use qualkg::corpus::{PLM_FILE, QC_FILE};
use qualkg::dataset::{fingerprint, load_plm, load_qc, load_rules};
use qualkg::domain::{PlmComponent, QualificationCard, RuleTable};

use crate::log::{ReviewDecision, SubjectType, Verdict};
use crate::ServiceError;

pub const SNAPSHOT_FILE: &str = "state.snapshot.json";

/// Records as loaded from the data directory, before any decision.
#[derive(Debug, Clone)]
pub struct Base {
    pub plm: Vec<PlmComponent>,
    pub qc: Vec<QualificationCard>,
    pub rules: Vec<NormalizationRule>,
    pub review: Vec<PnReviewItem>,
    pub fingerprints: BTreeMap<String, String>,
}

impl Base {
    /// `Ok(None)` when the directory holds no component database.
    pub fn load(dir: &Path) -> Result<Option<Self>, ServiceError> {
        let plm_path = dir.join(PLM_FILE);
        if !plm_path.is_file() {
            return Ok(None);
        }
        let mut fingerprints = BTreeMap::new();
        let mut stamp = |name: &str| -> Result<(), ServiceError> {
            fingerprints.insert(name.to_string(), fingerprint(&dir.join(name))?);
            Ok(())
        };
        stamp(PLM_FILE)?;
        let plm = load_plm(&plm_path)?;

        let qc_name = if dir.join(files::QC_AUGMENTED).is_file() {
            files::QC_AUGMENTED
        } else {
            QC_FILE
        };
        let qc = if dir.join(qc_name).is_file() {
            stamp(qc_name)?;
            load_qc(&dir.join(qc_name))?
        } else {
            Vec::new()
        };

        let rules = if dir.join(files::RULES_JSON).is_file() {
            stamp(files::RULES_JSON)?;
            read_json(&dir.join(files::RULES_JSON))?
        } else if dir.join(files::RULES_CSV).is_file() {
            stamp(files::RULES_CSV)?;
            rules_from_table(&load_rules(&dir.join(files::RULES_CSV))?)
        } else {
            Vec::new()
        };

        let review = if dir.join(files::REVIEW_QUEUE).is_file() {
            stamp(files::REVIEW_QUEUE)?;
            read_json(&dir.join(files::REVIEW_QUEUE))?
        } else {
            Vec::new()
        };

        Ok(Some(Self {
            plm,
            qc,
            rules,
            review,
            fingerprints,
        }))
    }
}

/// One accepted rule per canonical name of a bare table.
pub fn rules_from_table(table: &RuleTable) -> Vec<NormalizationRule> {
    let mut groups: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (raw, canonical) in table.rows() {
        groups.entry(canonical).or_default().insert(raw.to_string());
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, (canonical, variants))| {
            let mut r = NormalizationRule::proposed(i as u32 + 1, canonical, variants);
            r.state = RuleState::Accepted;
            r
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ServiceError::Data(format!("{}: {e}", path.display())))
}

/// A reviewer verdict on one suggested alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub decision: Verdict,
    pub user: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

/// Why a decision could not be applied. Nothing is logged in that case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApplyError {
    Malformed { code: &'static str, message: String },
    UnknownSubject(String),
    Conflict { code: &'static str, message: String },
}

impl std::fmt::Display for ApplyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApplyError::Malformed { message, .. } | ApplyError::Conflict { message, .. } => f.write_str(message),
            ApplyError::UnknownSubject(s) => write!(f, "unknown subject `{s}`"),
        }
    }
}

fn malformed(code: &'static str, message: impl Into<String>) -> ApplyError {
    ApplyError::Malformed {
        code,
        message: message.into(),
    }
}

/// What a successful decision touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Rules,
    Cards,
    Queue,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Materialized {
    pub rules: Vec<NormalizationRule>,
    pub review: Vec<PnReviewItem>,
    /// Part numbers set by reviewers, keyed by qualification number.
    pub resolved_pns: BTreeMap<String, String>,
    /// Keyed by `{pn}/{qual number}`.
    pub annotations: BTreeMap<String, Annotation>,
    pub applied: usize,
}

pub fn annotation_key(pn: &str, qual: &str) -> String {
    format!("{pn}/{qual}")
}

impl Materialized {
    pub fn initial(base: &Base) -> Self {
        Self {
            rules: base.rules.clone(),
            review: base.review.clone(),
            resolved_pns: BTreeMap::new(),
            annotations: BTreeMap::new(),
            applied: 0,
        }
    }

    pub fn rule_table(&self) -> Result<RuleTable, ServiceError> {
        rule_table(&self.rules).map_err(|e| ServiceError::Data(e.to_string()))
    }

    pub fn cards(&self, base: &Base) -> Vec<QualificationCard> {
        base.qc
            .iter()
            .map(|c| match self.resolved_pns.get(&c.number) {
                Some(pn) => {
                    let mut c = c.clone();
                    c.part_number = Some(pn.clone());
                    c
                }
                None => c.clone(),
            })
            .collect()
    }

    pub fn pending_rules(&self) -> Vec<&NormalizationRule> {
        self.rules.iter().filter(|r| r.state == RuleState::Proposed).collect()
    }

    pub fn pending_pns(&self) -> Vec<&PnReviewItem> {
        self.review.iter().filter(|r| r.is_pending()).collect()
    }

    /// Applies one decision, leaving `self` untouched on error.
    pub fn apply(&mut self, base: &Base, d: &ReviewDecision) -> Result<Effect, ApplyError> {
        let effect = match d.subject_type {
            SubjectType::Rule => self.apply_rule(d)?,
            SubjectType::PnExtraction => self.apply_pn(base, d)?,
            SubjectType::AlternativeCandidate => self.apply_alternative(base, d)?,
        };
        self.applied += 1;
        Ok(effect)
    }

    fn apply_rule(&mut self, d: &ReviewDecision) -> Result<Effect, ApplyError> {
        let id: u32 = d
            .subject_id
            .trim()
            .parse()
            .map_err(|_| malformed("bad_subject_id", format!("rule id `{}` is not a number", d.subject_id)))?;
        let current = self
            .rules
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| ApplyError::UnknownSubject(format!("rule {id}")))?;
        let action = match d.decision {
            Verdict::Accept => RuleAction::Accept,
            Verdict::Reject => RuleAction::Reject,
            Verdict::Edit => edit_action(d.payload.as_ref(), current)?,
        };
        if let RuleAction::Split { parts } = &action {
            if split_already_applied(&self.rules, id, parts) {
                return Ok(Effect::Rules);
            }
        }
        let decision = RuleDecision {
            rule_id: id,
            action,
            note: d.comment(),
        };
        let (rules, _) = apply_decisions(&self.rules, &[decision]).map_err(|e| match e {
            CleaningError::UnknownRule(id) => ApplyError::UnknownSubject(format!("rule {id}")),
            CleaningError::Overlap { .. } => ApplyError::Conflict {
                code: "rule_overlap",
                message: e.to_string(),
            },
            other => malformed("invalid_rule", other.to_string()),
        })?;
        self.rules = rules;
        Ok(Effect::Rules)
    }

    fn apply_pn(&mut self, base: &Base, d: &ReviewDecision) -> Result<Effect, ApplyError> {
        let number = d.subject_id.trim();
        let pos = self
            .review
            .iter()
            .position(|r| r.qual_number == number)
            .ok_or_else(|| ApplyError::UnknownSubject(format!("no review item for `{number}`")))?;
        if d.decision == Verdict::Reject {
            let item = &mut self.review[pos];
            item.candidate_pn = None;
            return Ok(Effect::Queue);
        }
        let supplied = d.payload_str("pn").map(str::trim).filter(|s| !s.is_empty());
        let pn = match (d.decision, supplied) {
            (_, Some(pn)) => pn.to_string(),
            (Verdict::Accept, None) => self.review[pos]
                .candidate_pn
                .clone()
                .ok_or_else(|| malformed("missing_pn", format!("`{number}` has no candidate; supply payload.pn")))?,
            _ => return Err(malformed("missing_pn", "an edit needs payload.pn")),
        };
        let card = base
            .qc
            .iter()
            .find(|c| c.number == number)
            .ok_or_else(|| ApplyError::UnknownSubject(format!("qualification `{number}`")))?;
        let table = rule_table(&self.rules).map_err(|e| ApplyError::Conflict {
            code: "rule_overlap",
            message: e.to_string(),
        })?;
        let mut queue = vec![self.review[pos].clone()];
        let mut cards = vec![card.clone()];
        let outcome = resolve_review(&mut queue, &mut cards, number, &pn, &base.plm, &table)
            .map_err(|e| ApplyError::UnknownSubject(e.to_string()))?;
        match outcome {
            Resolution::Resolved(card) => {
                self.review[pos] = queue.remove(0);
                self.resolved_pns.insert(card.number.clone(), pn);
                Ok(Effect::Cards)
            }
            Resolution::StillPending(reason) => Err(ApplyError::Conflict {
                code: reason.code(),
                message: format!("part number `{pn}` fails the cross-check for `{number}`: {}", reason.code()),
            }),
        }
    }

    fn apply_alternative(&mut self, base: &Base, d: &ReviewDecision) -> Result<Effect, ApplyError> {
        let (pn, qual) = d
            .subject_id
            .rsplit_once('/')
            .ok_or_else(|| malformed("bad_subject_id", "alternative subject id must be `{pn}/{qual number}`"))?;
        if !base.plm.iter().any(|c| c.part_number == pn) {
            return Err(ApplyError::UnknownSubject(format!("part number `{pn}`")));
        }
        if !base.qc.iter().any(|c| c.number == qual) {
            return Err(ApplyError::UnknownSubject(format!("qualification `{qual}`")));
        }
        self.annotations.insert(
            annotation_key(pn, qual),
            Annotation {
                decision: d.decision,
                user: d.user.clone(),
                timestamp: d.timestamp,
                comment: d.comment(),
            },
        );
        Ok(Effect::Annotation)
    }
}

fn string_set(v: &Value) -> Option<BTreeSet<String>> {
    v.as_array()?
        .iter()
        .map(|s| s.as_str().map(|s| s.trim().to_string()))
        .collect()
}

fn edit_action(payload: Option<&Value>, current: &NormalizationRule) -> Result<RuleAction, ApplyError> {
    let payload = payload.ok_or_else(|| malformed("missing_payload", "a rule edit needs a payload"))?;
    if let Some(parts) = payload.get("parts") {
        let parts = parts
            .as_array()
            .ok_or_else(|| malformed("bad_payload", "`parts` must be an array"))?
            .iter()
            .map(|p| {
                let canonical = p.get("canonical").and_then(Value::as_str);
                let variants = p.get("variants").and_then(string_set);
                match (canonical, variants) {
                    (Some(c), Some(v)) => Ok((c.trim().to_string(), v)),
                    _ => Err(malformed("bad_payload", "each part needs `canonical` and `variants`")),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(RuleAction::Split { parts });
    }
    let canonical = payload
        .get("canonical")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("bad_payload", "a rule edit needs `canonical` or `parts`"))?;
    let variants = match payload.get("variants") {
        Some(v) => string_set(v).ok_or_else(|| malformed("bad_payload", "`variants` must be an array of strings"))?,
        None => current.variants.clone(),
    };
    Ok(RuleAction::Edit {
        canonical: canonical.to_string(),
        variants,
    })
}

fn split_already_applied(rules: &[NormalizationRule], id: u32, parts: &[(String, BTreeSet<String>)]) -> bool {
    let Some(((first_c, first_v), rest)) = parts.split_first() else {
        return false;
    };
    let same = |r: &NormalizationRule, c: &str, v: &BTreeSet<String>| r.is_active() && r.canonical == c && &r.variants == v;
    rules.iter().any(|r| r.id == id && same(r, first_c, first_v))
        && rest
            .iter()
            .all(|(c, v)| rules.iter().any(|r| r.id != id && same(r, c, v)))
}

/// Periodic copy of the folded state, tagged with the log prefix it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: Materialized,
    pub last: Option<ReviewDecision>,
}

impl Snapshot {
    pub fn load(path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, path: &Path) -> Result<(), ServiceError> {
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec(self).map_err(|e| ServiceError::Data(e.to_string()))?;
        std::fs::write(&tmp, body).map_err(|e| ServiceError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| ServiceError::io(path, e))
    }
}

/// Folds `log` (already in fold order) over `base`, starting from `snapshot`
/// when it matches a prefix of the log. A logged decision that no longer
/// applies is skipped and reported.
pub fn fold(base: &Base, log: &[ReviewDecision], snapshot: Option<Snapshot>) -> (Materialized, Vec<String>) {
    let (mut state, start) = match snapshot {
        Some(s) if s.state.applied <= log.len() && s.state.applied > 0 && s.last.as_ref() == log.get(s.state.applied - 1) => {
            let n = s.state.applied;
            (s.state, n)
        }
        _ => (Materialized::initial(base), 0),
    };
    let mut warnings = Vec::new();
    for (i, d) in log.iter().enumerate().skip(start) {
        let mut next = state.clone();
        match next.apply(base, d) {
            Ok(_) => state = next,
            Err(e) => {
                warnings.push(format!("decision {} skipped: {e}", i + 1));
                state.applied += 1;
            }
        }
    }
    (state, warnings)
}
