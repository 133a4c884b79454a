//! Canonical record types shared by every stage of the pipeline.
//!
//! Two sources feed the system: the product-lifecycle database (one
//! [`PlmComponent`] per row) and the qualification catalog (one
//! [`QualificationCard`] per row). Manufacturer names are kept exactly as
//! entered; normalization happens at read time through a [`RuleTable`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("invalid qualification status `{0}`")]
    InvalidStatus(String),
    #[error("field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("rule table is not idempotent: `{raw}` maps to `{canonical}`, which itself maps to `{next}`")]
    ChainedRule {
        raw: String,
        canonical: String,
        next: String,
    },
    #[error("rule table maps `{raw}` to both `{first}` and `{second}`")]
    ConflictingRule {
        raw: String,
        first: String,
        second: String,
    },
}

/// One row of the product-lifecycle database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlmComponent {
    pub part_number: String,
    pub package_code: String,
    pub subpackage_code: String,
    /// Raw manufacturer name, as entered.
    pub manufacturer_name: String,
    pub family: String,
    /// Lead pitch in millimetres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<Decimal>,
    /// Pin dimension in micrometres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin_dimension: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_finish: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_length: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_width: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_height: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembly_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic_pn: Option<String>,
}

impl PlmComponent {
    pub fn new(
        part_number: impl Into<String>,
        package_code: impl Into<String>,
        subpackage_code: impl Into<String>,
        manufacturer_name: impl Into<String>,
        family: impl Into<String>,
    ) -> Self {
        Self {
            part_number: part_number.into(),
            package_code: package_code.into(),
            subpackage_code: subpackage_code.into(),
            manufacturer_name: manufacturer_name.into(),
            family: family.into(),
            pitch: None,
            pin_dimension: None,
            lead_finish: None,
            raw_material: None,
            package_length: None,
            package_width: None,
            package_height: None,
            assembly_type: None,
            generic_pn: None,
        }
    }

    /// The identifying quadruple (PN, package, subpackage, raw manufacturer).
    pub fn key(&self) -> (&str, &str, &str, &str) {
        (
            &self.part_number,
            &self.package_code,
            &self.subpackage_code,
            &self.manufacturer_name,
        )
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.part_number.trim().is_empty() {
            return Err(DomainError::InvalidField {
                field: "part_number",
                reason: "must be nonempty".into(),
            });
        }
        positive("pitch", self.pitch)?;
        positive("pin_dimension_um", self.pin_dimension)?;
        Ok(())
    }
}

fn positive(field: &'static str, value: Option<Decimal>) -> Result<(), DomainError> {
    match value {
        Some(v) if v <= Decimal::ZERO => Err(DomainError::InvalidField {
            field,
            reason: format!("must be > 0, got {v}"),
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualStatus {
    Closed,
    Ongoing,
    Failed,
    Obsolete,
}

impl QualStatus {
    pub const ALL: [QualStatus; 4] = [
        QualStatus::Closed,
        QualStatus::Ongoing,
        QualStatus::Failed,
        QualStatus::Obsolete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualStatus::Closed => "Closed",
            QualStatus::Ongoing => "Ongoing",
            QualStatus::Failed => "Failed",
            QualStatus::Obsolete => "Obsolete",
        }
    }
}

impl fmt::Display for QualStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualStatus {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QualStatus::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DomainError::InvalidStatus(s.to_string()))
    }
}

/// One qualification record of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationCard {
    pub number: String,
    pub package_code: String,
    pub subpackage_code: String,
    /// Raw manufacturer name, as entered.
    pub manufacturer_name: String,
    pub status: QualStatus,
    pub notes: String,
    /// Part number recovered from the notes; absent until cleaning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_number: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualification_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documentation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal_coating: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrate_material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembly_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin_dimension: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

impl QualificationCard {
    pub fn new(
        number: impl Into<String>,
        package_code: impl Into<String>,
        subpackage_code: impl Into<String>,
        manufacturer_name: impl Into<String>,
        status: QualStatus,
        notes: impl Into<String>,
    ) -> Self {
        Self {
            number: number.into(),
            package_code: package_code.into(),
            subpackage_code: subpackage_code.into(),
            manufacturer_name: manufacturer_name.into(),
            status,
            notes: notes.into(),
            part_number: None,
            qualification_type: None,
            description: None,
            documentation: None,
            conformal_coating: None,
            substrate_material: None,
            assembly_type: None,
            pitch: None,
            pin_dimension: None,
            family: None,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.number.trim().is_empty() {
            return Err(DomainError::InvalidField {
                field: "number",
                reason: "must be nonempty".into(),
            });
        }
        positive("pitch", self.pitch)?;
        positive("pin_dimension_um", self.pin_dimension)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchType {
    Direct,
    Similarity,
    Alternative,
}

/// A qualification card paired with the way it applies to a component.
///
/// Only alternative matches carry a cosine score, and they are always
/// suggestions for an expert rather than verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualMatch {
    pub qualification: QualificationCard,
    pub match_type: MatchType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub suggestion: bool,
}

impl QualMatch {
    pub fn direct(qualification: QualificationCard) -> Self {
        Self {
            qualification,
            match_type: MatchType::Direct,
            score: None,
            suggestion: false,
        }
    }

    pub fn similarity(qualification: QualificationCard) -> Self {
        Self {
            qualification,
            match_type: MatchType::Similarity,
            score: None,
            suggestion: false,
        }
    }

    pub fn alternative(qualification: QualificationCard, score: f64) -> Self {
        Self {
            qualification,
            match_type: MatchType::Alternative,
            score: Some(score),
            suggestion: true,
        }
    }

    pub fn number(&self) -> &str {
        &self.qualification.number
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CascadeStage {
    DirectFound,
    SimilarityFound,
    AlternativeProposed,
    NoneFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationReport {
    pub component: PlmComponent,
    pub direct: Vec<QualMatch>,
    pub similarity: Vec<QualMatch>,
    pub alternative: Vec<QualMatch>,
    pub cascade_stage: CascadeStage,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl QualificationReport {
    /// Checks the cascade and ordering invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.alternative.is_empty() && (!self.direct.is_empty() || !self.similarity.is_empty())
        {
            return Err("alternative matches reported alongside direct/similarity".into());
        }
        for m in &self.alternative {
            if m.score.is_none() {
                return Err(format!("alternative {} has no score", m.number()));
            }
        }
        for m in self.direct.iter().chain(&self.similarity) {
            if m.score.is_some() {
                return Err(format!("{:?} match {} carries a score", m.match_type, m.number()));
            }
        }
        for w in self.alternative.windows(2) {
            let (a, b) = (w[0].score.unwrap(), w[1].score.unwrap());
            if a < b || (a == b && w[0].number() > w[1].number()) {
                return Err("alternatives not sorted by score desc, number asc".into());
            }
        }
        Ok(())
    }
}

/// Raw manufacturer name → canonical name lookup table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    rows: BTreeMap<String, String>,
}

impl RuleTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from `(raw, canonical)` rows, rejecting conflicting
    /// duplicates and chains that would break idempotency.
    pub fn from_rows<I, A, B>(rows: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut table = Self::new();
        for (raw, canonical) in rows {
            table.insert(raw, canonical)?;
        }
        table.check_idempotent()?;
        Ok(table)
    }

    fn insert(&mut self, raw: impl Into<String>, canonical: impl Into<String>) -> Result<(), DomainError> {
        let raw = raw.into().trim().to_string();
        let canonical = canonical.into().trim().to_string();
        if raw.is_empty() || canonical.is_empty() {
            return Err(DomainError::InvalidField {
                field: "raw_name/canonical_name",
                reason: "must be nonempty".into(),
            });
        }
        if let Some(prev) = self.rows.get(&raw) {
            if *prev != canonical {
                return Err(DomainError::ConflictingRule {
                    raw,
                    first: prev.clone(),
                    second: canonical,
                });
            }
        }
        self.rows.insert(raw, canonical);
        Ok(())
    }

    /// Every canonical name must map to itself or have no rule.
    pub fn check_idempotent(&self) -> Result<(), DomainError> {
        for (raw, canonical) in &self.rows {
            if let Some(next) = self.rows.get(canonical) {
                if next != canonical {
                    return Err(DomainError::ChainedRule {
                        raw: raw.clone(),
                        canonical: canonical.clone(),
                        next: next.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn lookup(&self, raw: &str) -> Option<&str> {
        self.rows.get(raw.trim()).map(String::as_str)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &str)> {
        self.rows.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct canonical names referenced by the table.
    pub fn canonical_names(&self) -> std::collections::BTreeSet<&str> {
        self.rows.values().map(String::as_str).collect()
    }
}

/// Resolves a raw manufacturer name through the rule table, falling back to
/// the raw name itself when no rule applies.
pub fn canonical_manufacturer(raw: &str, rules: &RuleTable) -> String {
    match rules.lookup(raw) {
        Some(canonical) => canonical.to_string(),
        None => raw.to_string(),
    }
}

/// Parses an optional decimal cell; empty means absent.
pub fn parse_decimal(field: &'static str, text: &str) -> Result<Option<Decimal>, DomainError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    Decimal::from_str(text)
        .map(Some)
        .map_err(|e| DomainError::InvalidField {
            field,
            reason: format!("`{text}` is not a decimal: {e}"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc_rules() -> RuleTable {
        RuleTable::from_rows([
            ("ABC Corp", "ABC"),
            ("ABC", "ABC"),
            ("ABC Inc.", "ABC"),
            ("ABC International", "ABC"),
            ("ABC Inter.", "ABC"),
        ])
        .unwrap()
    }

    #[test]
    fn canonical_lookup_and_fallback() {
        let rules = abc_rules();
        assert_eq!(canonical_manufacturer("ABC Corp", &rules), "ABC");
        assert_eq!(canonical_manufacturer("  ABC Inter. ", &rules), "ABC");
        assert_eq!(canonical_manufacturer("XYZ", &RuleTable::new()), "XYZ");
        assert_eq!(canonical_manufacturer("xyz Ltd", &rules), "xyz Ltd");
    }

    #[test]
    fn canonical_is_idempotent() {
        let rules = abc_rules();
        for raw in ["ABC Corp", "ABC", "XYZ", "ABC Inc."] {
            let once = canonical_manufacturer(raw, &rules);
            assert_eq!(canonical_manufacturer(&once, &rules), once);
        }
    }

    #[test]
    fn chained_rules_rejected() {
        let err = RuleTable::from_rows([("ABC Corp", "ABC"), ("ABC", "ABC Holding")]).unwrap_err();
        assert!(matches!(err, DomainError::ChainedRule { .. }));
    }

    #[test]
    fn conflicting_rules_rejected() {
        let err = RuleTable::from_rows([("ABC Corp", "ABC"), ("ABC Corp", "XYZ")]).unwrap_err();
        assert!(matches!(err, DomainError::ConflictingRule { .. }));
    }

    #[test]
    fn status_parsing() {
        assert_eq!("closed".parse::<QualStatus>().unwrap(), QualStatus::Closed);
        assert_eq!("Obsolete".parse::<QualStatus>().unwrap(), QualStatus::Obsolete);
        assert!("Pending".parse::<QualStatus>().is_err());
    }

    #[test]
    fn invalid_measurements_rejected() {
        let mut c = PlmComponent::new("P1", "FP1", "a1", "ABC", "FP");
        c.pitch = Some(Decimal::ZERO);
        assert!(c.validate().is_err());
        c.pitch = Some(Decimal::new(127, 2));
        assert!(c.validate().is_ok());
        c.part_number = " ".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn optional_fields_absent_in_json() {
        let c = PlmComponent::new("P1", "FP1", "a1", "ABC", "FP");
        let json = serde_json::to_string(&c).unwrap();
        assert!(!json.contains("lead_finish"));
        assert!(!json.contains("null"));
    }
}
