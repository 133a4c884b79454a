//! The retrieval cascade: direct, then by similarity, then alternatives.
//!
//! Direct and similarity matches come from graph queries over the virtual
//! knowledge graph. Alternatives are filtered by the component family's
//! rule (a graph query for the equality clauses plus exact decimal checks
//! for the numeric ones) and ranked by embedding similarity.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rust_decimal::Decimal;
use thiserror::Error;

use crate::criteria::{normalize_text, AlternativeRule, Attribute, Comparison, RuleRegistry};
use crate::dataset::Dataset;
use crate::domain::{canonical_manufacturer, CascadeStage, PlmComponent, QualMatch, QualificationCard, QualificationReport, RuleTable};
use crate::vector::canonical::{card_json, component_json};
use crate::vector::{Embedder, VectorError, VectorIndex};
use crate::vkg::{
    card_number, qualification_mappings, run_query, MappingSet, QueryTemplate, Store, Term, VkgError, DIRECT_QUERY,
    SIMILARITY_QUERY,
};

pub const DEFAULT_ALTERNATIVE_K: usize = 200;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("part number `{0}` is not in the component database")]
    PnNotFound(String),
    #[error(transparent)]
    Vkg(#[from] VkgError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// Both datasets with their relational store and a lazily built embedding
/// index of the cards. Changing the rules yields a new catalog, which
/// rebuilds the index on first use.
pub struct Catalog {
    dataset: Dataset,
    store: Store,
    embedder: Arc<dyn Embedder>,
    components: HashMap<String, Vec<usize>>,
    cards: HashMap<String, usize>,
    index: OnceLock<Result<Arc<VectorIndex>, VectorError>>,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog")
            .field("components", &self.dataset.plm.len())
            .field("cards", &self.dataset.qc.len())
            .field("rules", &self.dataset.rules.len())
            .field("embedder", &self.embedder.tag())
            .finish()
    }
}

impl Catalog {
    pub fn new(dataset: Dataset, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        let store = Store::from_dataset(&dataset)?;
        let mut components: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, c) in dataset.plm.iter().enumerate() {
            components.entry(c.part_number.clone()).or_default().push(i);
        }
        let cards = dataset.qc.iter().enumerate().map(|(i, q)| (q.number.clone(), i)).collect();
        Ok(Self {
            dataset,
            store,
            embedder,
            components,
            cards,
            index: OnceLock::new(),
        })
    }

    /// Same records under a different rule table.
    pub fn with_rules(&self, rules: RuleTable) -> Result<Self, RetrievalError> {
        let store = self.store.with_rules(&rules)?;
        Ok(Self {
            dataset: Dataset::new(self.dataset.plm.clone(), self.dataset.qc.clone(), rules),
            store,
            embedder: self.embedder.clone(),
            components: self.components.clone(),
            cards: self.cards.clone(),
            index: OnceLock::new(),
        })
    }

    /// Same rules with replaced cards (after part numbers change).
    pub fn with_cards(&self, qc: Vec<QualificationCard>) -> Result<Self, RetrievalError> {
        Self::new(Dataset::new(self.dataset.plm.clone(), qc, self.dataset.rules.clone()), self.embedder.clone())
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn rules(&self) -> &RuleTable {
        &self.dataset.rules
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// PLM rows with this part number; the first in quadruple order is the
    /// representative.
    pub fn components(&self, pn: &str) -> Vec<&PlmComponent> {
        let mut rows: Vec<&PlmComponent> = self
            .components
            .get(pn)
            .map(|ix| ix.iter().map(|&i| &self.dataset.plm[i]).collect())
            .unwrap_or_default();
        rows.sort_by(|a, b| a.key().cmp(&b.key()));
        rows
    }

    pub fn component(&self, pn: &str) -> Option<&PlmComponent> {
        self.components(pn).into_iter().next()
    }

    pub fn card(&self, number: &str) -> Option<&QualificationCard> {
        self.cards.get(number).map(|&i| &self.dataset.qc[i])
    }

    /// Card embeddings over canonical JSON under the current rules.
    pub fn index(&self) -> Result<Arc<VectorIndex>, VectorError> {
        self.index
            .get_or_init(|| {
                let rules = &self.dataset.rules;
                VectorIndex::build(
                    self.embedder.as_ref(),
                    self.dataset.qc.iter().map(|q| (q.number.clone(), card_json(q, rules))),
                )
                .map(Arc::new)
            })
            .clone()
    }

    pub fn index_is_built(&self) -> bool {
        self.index.get().is_some()
    }
}

/// Result of the alternative stage, including why it may be empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlternativeOutcome {
    pub matches: Vec<QualMatch>,
    pub diagnostics: Vec<String>,
}

/// Query texts and mappings used by the cascade.
#[derive(Debug, Clone)]
pub struct Retriever {
    mappings: MappingSet,
    direct: QueryTemplate,
    similarity: QueryTemplate,
    registry: RuleRegistry,
}

impl Default for Retriever {
    fn default() -> Self {
        Self::new(qualification_mappings(), RuleRegistry::default())
    }
}

fn literal_text(t: Option<&Term>) -> Option<&str> {
    match t? {
        Term::Literal(s) => Some(s),
        Term::Iri(_) => None,
    }
}

impl Retriever {
    pub fn new(mappings: MappingSet, registry: RuleRegistry) -> Self {
        Self {
            mappings,
            direct: QueryTemplate::new(DIRECT_QUERY),
            similarity: QueryTemplate::new(SIMILARITY_QUERY),
            registry,
        }
    }

    pub fn mappings(&self) -> &MappingSet {
        &self.mappings
    }

    pub fn registry(&self) -> &RuleRegistry {
        &self.registry
    }

    fn matches(&self, catalog: &Catalog, numbers: BTreeSet<String>, make: fn(QualificationCard) -> QualMatch) -> Vec<QualMatch> {
        let mut out: Vec<QualMatch> = numbers
            .into_iter()
            .filter_map(|n| catalog.card(&n).cloned())
            .map(make)
            .collect();
        out.sort_by(|a, b| crate::cleaning::natural_cmp(a.number(), b.number()));
        out
    }

    fn require(&self, catalog: &Catalog, pn: &str) -> Result<(), RetrievalError> {
        if catalog.components.contains_key(pn) {
            Ok(())
        } else {
            Err(RetrievalError::PnNotFound(pn.to_string()))
        }
    }

    /// Cards whose part number, package, subpackage and canonical
    /// manufacturer equal the component's.
    pub fn find_direct(&self, catalog: &Catalog, pn: &str) -> Result<Vec<QualMatch>, RetrievalError> {
        self.require(catalog, pn)?;
        let query = self.direct.instantiate(&[("selected_value", pn)])?;
        let rows = run_query(&query, &self.mappings, catalog.store())?;
        let numbers = rows.column_values("qc").into_iter().filter_map(card_number).collect();
        Ok(self.matches(catalog, numbers, QualMatch::direct))
    }

    /// Cards agreeing on package, subpackage and canonical manufacturer
    /// whose extracted part number differs. Cards without one are skipped.
    pub fn find_by_similarity(&self, catalog: &Catalog, pn: &str) -> Result<Vec<QualMatch>, RetrievalError> {
        self.require(catalog, pn)?;
        let query = self.similarity.instantiate(&[("selected_value", pn)])?;
        let rows = run_query(&query, &self.mappings, catalog.store())?;
        let numbers = (0..rows.len())
            .filter(|&r| literal_text(rows.value(r, "q_pn")).is_some_and(|q| q != pn))
            .filter_map(|r| rows.value(r, "qc").and_then(card_number))
            .collect();
        Ok(self.matches(catalog, numbers, QualMatch::similarity))
    }

    /// Cards satisfying the family rule, best `k` by cosine similarity to
    /// the component, excluding `exclude`.
    pub fn find_alternative(
        &self,
        catalog: &Catalog,
        component: &PlmComponent,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<AlternativeOutcome, RetrievalError> {
        let mut out = AlternativeOutcome::default();
        let Some(rule) = self.registry.for_family(&component.family) else {
            out.diagnostics.push(format!("no alternative rule for family {}", component.family));
            return Ok(out);
        };
        let missing = rule.missing_attributes(component);
        if !missing.is_empty() {
            let names: Vec<&str> = missing.iter().map(|a| a.name()).collect();
            out.diagnostics.push(format!(
                "incomparable attributes: component {} lacks {}",
                component.part_number,
                names.join(", ")
            ));
            return Ok(out);
        }
        let mut candidates: HashSet<String> = self
            .rule_candidates(catalog, rule, component)?
            .into_iter()
            .filter(|n| !exclude.contains(n))
            .collect();
        candidates.retain(|n| catalog.card(n).is_some());
        if candidates.is_empty() || k == 0 {
            return Ok(out);
        }
        let index = catalog.index()?;
        let embedder = catalog.embedder();
        let query = embedder.embed(&component_json(component, catalog.rules()))?;
        for (id, score) in index.top_k(&query, &embedder.tag(), k, Some(&candidates))? {
            if let Some(card) = catalog.card(&id) {
                out.matches.push(QualMatch::alternative(card.clone(), score));
            }
        }
        Ok(out)
    }

    /// Cards passing every clause of `rule`: text equalities run inside the
    /// graph query, numeric and free-text clauses are checked on the rows.
    pub fn rule_candidates(
        &self,
        catalog: &Catalog,
        rule: &AlternativeRule,
        component: &PlmComponent,
    ) -> Result<BTreeSet<String>, RetrievalError> {
        let query = alternative_query(rule, component, catalog.rules());
        let rows = run_query(&crate::vkg::parse_query(&query)?, &self.mappings, catalog.store())?;
        let mut out = BTreeSet::new();
        'rows: for r in 0..rows.len() {
            for clause in &rule.clauses {
                let Some(var) = row_variable(clause.attribute()) else {
                    continue;
                };
                let Some(cell) = literal_text(rows.value(r, var)) else {
                    continue 'rows;
                };
                if !post_filter(clause, component, cell) {
                    continue 'rows;
                }
            }
            if let Some(n) = rows.value(r, "qc").and_then(card_number) {
                out.insert(n);
            }
        }
        Ok(out)
    }

    /// Runs the cascade for one part number.
    pub fn retrieve(&self, catalog: &Catalog, pn: &str, k: usize) -> Result<QualificationReport, RetrievalError> {
        let component = catalog
            .component(pn)
            .ok_or_else(|| RetrievalError::PnNotFound(pn.to_string()))?
            .clone();
        let direct = self.find_direct(catalog, pn)?;
        let similarity = self.find_by_similarity(catalog, pn)?;
        let mut report = QualificationReport {
            component,
            cascade_stage: CascadeStage::NoneFound,
            direct,
            similarity,
            alternative: Vec::new(),
            diagnostics: Vec::new(),
        };
        if !report.direct.is_empty() {
            report.cascade_stage = CascadeStage::DirectFound;
        } else if !report.similarity.is_empty() {
            report.cascade_stage = CascadeStage::SimilarityFound;
        } else {
            let alt = self.find_alternative(catalog, &report.component, k, &HashSet::new())?;
            report.diagnostics = alt.diagnostics;
            report.alternative = alt.matches;
            if !report.alternative.is_empty() {
                report.cascade_stage = CascadeStage::AlternativeProposed;
            }
        }
        Ok(report)
    }
}

fn row_variable(attr: Attribute) -> Option<&'static str> {
    match attr {
        Attribute::Pitch => Some("pitch"),
        Attribute::PinDimension => Some("pin"),
        Attribute::AssemblyType => Some("mounting"),
        Attribute::PackageCode | Attribute::Manufacturer => None,
    }
}

fn post_filter(clause: &Comparison, c: &PlmComponent, cell: &str) -> bool {
    let decimal = |s: &str| Decimal::from_str(s.trim()).ok();
    match (clause, clause.attribute()) {
        (Comparison::Equal { .. }, Attribute::AssemblyType) => {
            c.assembly_type.as_deref().map(normalize_text) == Some(normalize_text(cell))
        }
        (Comparison::Equal { .. }, Attribute::Pitch) => c.pitch.is_some() && c.pitch == decimal(cell),
        (Comparison::Equal { .. }, Attribute::PinDimension) => c.pin_dimension.is_some() && c.pin_dimension == decimal(cell),
        (Comparison::WithinAbs { bound, .. }, attr) => {
            let left = match attr {
                Attribute::Pitch => c.pitch,
                Attribute::PinDimension => c.pin_dimension,
                _ => None,
            };
            matches!((left, decimal(cell)), (Some(a), Some(b)) if (a - b).abs() <= *bound)
        }
        _ => false,
    }
}

/// Graph query selecting the cards that may satisfy `rule` for `component`.
pub fn alternative_query(rule: &AlternativeRule, component: &PlmComponent, rules: &RuleTable) -> String {
    let mut patterns = vec!["?qc a tasi:QUALIFICATION_CARD".to_string()];
    let mut vars = vec!["?qc".to_string()];
    for clause in &rule.clauses {
        let (predicate, constant) = match (clause, clause.attribute()) {
            (_, Attribute::PackageCode) => ("pkgCode", Some(component.package_code.clone())),
            (_, Attribute::Manufacturer) => (
                "manufacturerName",
                Some(canonical_manufacturer(&component.manufacturer_name, rules)),
            ),
            (_, Attribute::Pitch) => ("pitch", None),
            (_, Attribute::PinDimension) => ("pinDimension", None),
            (_, Attribute::AssemblyType) => ("assemblyType", None),
        };
        match constant {
            Some(value) => patterns.push(format!("tasi:{predicate} \"{}\"", crate::vkg::escape_literal(&value))),
            None => {
                let var = row_variable(clause.attribute()).expect("numeric or text attribute");
                patterns.push(format!("tasi:{predicate} ?{var}"));
                vars.push(format!("?{var}"));
            }
        }
    }
    format!(
        "PREFIX tasi: <http://tasi.com#>\n\nSELECT {}\nWHERE {{\n  {} .\n}}\n",
        vars.join(" "),
        patterns.join(";\n      ")
    )
}
