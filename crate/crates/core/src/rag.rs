//! Retrieval-augmented classification baseline.
//!
//! Both datasets are rendered as JSON without any cleaning, cards are
//! ranked by cosine similarity to the component, and the top `k` go to the
//! model in a single request that asks for direct, similarity and
//! alternative matches.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::GroundTruth;
use crate::criteria::fp_rule_holds;
use crate::domain::{PlmComponent, QualStatus, QualificationCard, RuleTable};
use crate::llm::{mock_extract_pn, normalization_key, LlmError, LlmGateway, LlmRequest};
use crate::metrics::{Accumulator, Metrics};
use crate::vector::canonical::{card_json, card_value, component_json, component_value};
use crate::vector::{Embedder, VectorError, VectorIndex};

pub const DEFAULT_K: usize = 200;
pub const COVERAGE_POINTS: [usize; 3] = [50, 100, 200];

#[derive(Debug, Error)]
pub enum RagError {
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagPrediction {
    pub component_id: String,
    pub direct: BTreeSet<String>,
    pub similarity: BTreeSet<String>,
    pub alternative: BTreeSet<String>,
    pub raw_llm_output: String,
    pub compliant: bool,
    /// Ids the model returned that were not in its context.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

impl RagPrediction {
    pub fn all(&self) -> BTreeSet<String> {
        self.direct
            .iter()
            .chain(&self.similarity)
            .chain(&self.alternative)
            .cloned()
            .collect()
    }
}

/// Index of raw card renderings (no manufacturer rules applied).
pub fn build_card_index(embedder: &dyn Embedder, qc: &[QualificationCard]) -> Result<VectorIndex, VectorError> {
    let raw = RuleTable::new();
    VectorIndex::build(embedder, qc.iter().map(|q| (q.number.clone(), card_json(q, &raw))))
}

/// The `n` cards closest to the component, best first.
pub fn build_context(
    component: &PlmComponent,
    embedder: &dyn Embedder,
    index: &VectorIndex,
    n: usize,
) -> Result<Vec<(String, f64)>, VectorError> {
    let query = embedder.embed(&component_json(component, &RuleTable::new()))?;
    index.top_k(&query, &embedder.tag(), n, None)
}

fn ids(v: &Value, key: &str) -> Vec<String> {
    v.get(key)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default()
}

/// One request for the whole context. Non-compliant output yields empty
/// sets; ids outside the context are dropped and listed.
pub fn classify(
    component: &PlmComponent,
    context: &[&QualificationCard],
    gateway: &LlmGateway,
) -> Result<RagPrediction, LlmError> {
    let raw = RuleTable::new();
    let request = LlmRequest::rag_classification(
        component_value(component, &raw),
        context.iter().map(|q| card_value(q, &raw)).collect(),
    );
    let response = gateway.complete(&request)?;
    let mut prediction = RagPrediction {
        component_id: component.part_number.clone(),
        raw_llm_output: response.raw_text.clone(),
        compliant: response.compliant,
        ..RagPrediction::default()
    };
    let Some(parsed) = response.parsed.filter(|_| response.compliant) else {
        return Ok(prediction);
    };
    let allowed: HashSet<&str> = context.iter().map(|q| q.number.as_str()).collect();
    for (key, slot) in [
        ("direct", &mut prediction.direct),
        ("similarity", &mut prediction.similarity),
        ("alternative", &mut prediction.alternative),
    ] {
        for id in ids(&parsed, key) {
            if allowed.contains(id.as_str()) {
                slot.insert(id);
            } else {
                prediction.dropped.push(id);
            }
        }
    }
    Ok(prediction)
}

fn decimal(v: &Value, key: &str) -> Option<Decimal> {
    match v.get(key)? {
        Value::Number(n) => Decimal::from_str(&n.to_string())
            .or_else(|_| Decimal::from_scientific(&n.to_string()))
            .ok(),
        Value::String(s) => Decimal::from_str(s).ok(),
        _ => None,
    }
}

fn text(v: &Value, key: &str) -> Option<String> {
    v.get(key).and_then(Value::as_str).map(str::to_string)
}

fn component_from(v: &Value) -> PlmComponent {
    let mut c = PlmComponent::new(
        text(v, "part_number").unwrap_or_default(),
        text(v, "package_code").unwrap_or_default(),
        text(v, "subpackage_code").unwrap_or_default(),
        text(v, "manufacturer").unwrap_or_default(),
        text(v, "family").unwrap_or_default(),
    );
    c.pitch = decimal(v, "pitch_mm");
    c.pin_dimension = decimal(v, "pin_dimension_um");
    c.assembly_type = text(v, "assembly_type");
    c
}

fn card_from(v: &Value) -> QualificationCard {
    let mut q = QualificationCard::new(
        text(v, "number").unwrap_or_default(),
        text(v, "package_code").unwrap_or_default(),
        text(v, "subpackage_code").unwrap_or_default(),
        text(v, "manufacturer").unwrap_or_default(),
        text(v, "status").and_then(|s| s.parse().ok()).unwrap_or(QualStatus::Ongoing),
        text(v, "notes").unwrap_or_default(),
    );
    q.part_number = text(v, "part_number");
    q.pitch = decimal(v, "pitch_mm");
    q.pin_dimension = decimal(v, "pin_dimension_um");
    q.assembly_type = text(v, "assembly_type");
    q
}

/// Offline stand-in for the model: applies the matching rules exactly to
/// the cards it was given, reading part numbers from the notes and
/// comparing manufacturers by normalized spelling.
pub fn mock_classify_payload(payload: &Value) -> Value {
    let component = component_from(payload.get("component").unwrap_or(&Value::Null));
    let cards: Vec<QualificationCard> = payload
        .get("context")
        .and_then(Value::as_array)
        .map(|a| a.iter().map(card_from).collect())
        .unwrap_or_default();
    let mfr = normalization_key(&component.manufacturer_name);
    let (mut direct, mut similarity, mut alternative) = (Vec::new(), Vec::new(), Vec::new());
    for q in &cards {
        let same_mfr = normalization_key(&q.manufacturer_name) == mfr;
        if q.package_code != component.package_code || !same_mfr || q.subpackage_code != component.subpackage_code {
            continue;
        }
        match q.part_number.clone().or_else(|| mock_extract_pn(&q.notes)) {
            Some(pn) if pn == component.part_number => direct.push(q.number.clone()),
            Some(_) => similarity.push(q.number.clone()),
            None => {}
        }
    }
    if direct.is_empty() && similarity.is_empty() {
        for q in &cards {
            let ok = if component.family == "FP" {
                fp_rule_holds(&component, q) == Some(true)
            } else {
                q.package_code == component.package_code && normalization_key(&q.manufacturer_name) == mfr
            };
            if ok {
                alternative.push(q.number.clone());
            }
        }
    }
    json!({"direct": direct, "similarity": similarity, "alternative": alternative})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagConfig {
    pub k: usize,
    /// Number of components evaluated; `None` means all.
    pub subset: Option<usize>,
    pub coverage_points: Vec<usize>,
    pub concurrency: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            subset: None,
            coverage_points: COVERAGE_POINTS.to_vec(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub micro: Metrics,
    #[serde(rename = "macro")]
    pub macro_avg: Metrics,
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
}

impl MetricsRow {
    pub fn from_accumulator(name: &str, acc: &Accumulator) -> Self {
        let c = acc.counts();
        Self {
            name: name.to_string(),
            micro: acc.micro(),
            macro_avg: acc.macro_avg(),
            true_positives: c.tp,
            predicted: c.predicted,
            actual: c.actual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub top: usize,
    pub found: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagReport {
    pub components: usize,
    pub k: usize,
    pub backend: String,
    pub embedder: String,
    /// Rows: direct, similarity, alternative, overall (type-agnostic union
    /// of pairs) and overall_typed (pairs tagged with their type).
    pub rows: Vec<MetricsRow>,
    pub coverage: Vec<CoveragePoint>,
    pub non_compliant: usize,
    pub dropped_ids: usize,
    pub predictions: Vec<RagPrediction>,
}

impl RagReport {
    pub fn row(&self, name: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table with one row per type and P/R/F1/IoU columns.
    pub fn table(&self) -> String {
        let mut out = format!("{:<14} {:>9} {:>9} {:>9} {:>9}\n", "type", "precision", "recall", "f1", "iou");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>9.3} {:>9.3} {:>9.3} {:>9.3}\n",
                r.name, r.micro.precision, r.micro.recall, r.micro.f1, r.micro.iou
            ));
        }
        out
    }
}

/// Evenly spaced components in part-number order.
pub fn select_subset(plm: &[PlmComponent], n: Option<usize>) -> Vec<&PlmComponent> {
    let mut sorted: Vec<&PlmComponent> = plm.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    sorted.dedup_by(|a, b| a.part_number == b.part_number);
    match n {
        Some(n) if n < sorted.len() => (0..n).map(|i| sorted[i * sorted.len() / n]).collect(),
        _ => sorted,
    }
}

fn tagged(p: [&BTreeSet<String>; 3]) -> BTreeSet<(usize, String)> {
    p.iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |id| (i, id.clone())))
        .collect()
}

/// Scores predictions against ground truth over the given components.
pub fn evaluate_rag(predictions: &[RagPrediction], truth: &GroundTruth) -> Vec<MetricsRow> {
    let mut accs: [Accumulator; 5] = Default::default();
    let empty = Default::default();
    for p in predictions {
        let t = truth.matches.get(&p.component_id).unwrap_or(&empty);
        accs[0].add(&p.direct, &t.direct);
        accs[1].add(&p.similarity, &t.similarity);
        accs[2].add(&p.alternative, &t.alternative);
        let all_t: BTreeSet<String> = t.direct.iter().chain(&t.similarity).chain(&t.alternative).cloned().collect();
        accs[3].add(&p.all(), &all_t);
        accs[4].add(
            &tagged([&p.direct, &p.similarity, &p.alternative]),
            &tagged([&t.direct, &t.similarity, &t.alternative]),
        );
    }
    ["direct", "similarity", "alternative", "overall", "overall_typed"]
        .iter()
        .zip(&accs)
        .map(|(n, a)| MetricsRow::from_accumulator(n, a))
        .collect()
}

struct Scored {
    prediction: RagPrediction,
    coverage: Vec<usize>,
    truth_total: usize,
}

/// Runs the baseline end to end over a subset of the component database.
pub fn run_rag(
    plm: &[PlmComponent],
    qc: &[QualificationCard],
    truth: &GroundTruth,
    cfg: &RagConfig,
    embedder: &dyn Embedder,
    gateway: &LlmGateway,
) -> Result<RagReport, RagError> {
    if cfg.k == 0 {
        return Err(RagError::Invalid("k must be at least 1".into()));
    }
    let index = build_card_index(embedder, qc)?;
    let cards: BTreeMap<&str, &QualificationCard> = qc.iter().map(|q| (q.number.as_str(), q)).collect();
    let subset = select_subset(plm, cfg.subset);
    let depth = cfg.coverage_points.iter().copied().chain([cfg.k]).max().unwrap_or(cfg.k);
    let empty = Default::default();

    let score = |component: &PlmComponent| -> Result<Scored, RagError> {
        let ranked = build_context(component, embedder, &index, depth)?;
        let context: Vec<&QualificationCard> = ranked.iter().take(cfg.k).filter_map(|(id, _)| cards.get(id.as_str()).copied()).collect();
        let prediction = classify(component, &context, gateway)?;
        let t = truth.matches.get(&component.part_number).unwrap_or(&empty);
        let all_t: BTreeSet<&String> = t.direct.iter().chain(&t.similarity).chain(&t.alternative).collect();
        let position: BTreeMap<&str, usize> = ranked.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
        let coverage = cfg
            .coverage_points
            .iter()
            .map(|&n| all_t.iter().filter(|id| position.get(id.as_str()).is_some_and(|&i| i < n)).count())
            .collect();
        Ok(Scored {
            prediction,
            coverage,
            truth_total: all_t.len(),
        })
    };

    let workers = cfg.concurrency.max(1).min(subset.len().max(1));
    let chunk = subset.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<Scored>, RagError>> = std::thread::scope(|s| {
        let handles: Vec<_> = subset
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(|c| score(c)).collect::<Result<Vec<_>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("rag worker panicked")).collect()
    });
    let mut scored = Vec::with_capacity(subset.len());
    for r in results {
        scored.extend(r?);
    }

    let predictions: Vec<RagPrediction> = scored.iter().map(|s| s.prediction.clone()).collect();
    let total: usize = scored.iter().map(|s| s.truth_total).sum();
    let coverage = cfg
        .coverage_points
        .iter()
        .enumerate()
        .map(|(i, &top)| {
            let found: usize = scored.iter().map(|s| s.coverage[i]).sum();
            CoveragePoint {
                top,
                found,
                total,
                fraction: if total == 0 { 1.0 } else { found as f64 / total as f64 },
            }
        })
        .collect();
    Ok(RagReport {
        components: predictions.len(),
        k: cfg.k,
        backend: gateway.backend_name().to_string(),
        embedder: embedder.tag(),
        rows: evaluate_rag(&predictions, truth),
        coverage,
        non_compliant: predictions.iter().filter(|p| !p.compliant).count(),
        dropped_ids: predictions.iter().map(|p| p.dropped.len()).sum(),
        predictions,
    })
}
