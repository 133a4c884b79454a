//! Family-dependent criteria for alternative qualification.
//!
//! A rule is a conjunction of attribute comparisons between a component and
//! a card. The flat-package rule compares package, pitch, pin dimension and
//! assembly process; every other family uses the generic package +
//! manufacturer rule.

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::domain::{canonical_manufacturer, PlmComponent, QualificationCard, RuleTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    PackageCode,
    Manufacturer,
    Pitch,
    PinDimension,
    AssemblyType,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::PackageCode => "package_code",
            Attribute::Manufacturer => "manufacturer",
            Attribute::Pitch => "pitch",
            Attribute::PinDimension => "pin_dimension",
            Attribute::AssemblyType => "assembly_type",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Attribute::Pitch | Attribute::PinDimension)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Comparison {
    Equal { attribute: Attribute },
    /// `|component - card| <= bound`, bound expressed in the attribute's unit.
    WithinAbs { attribute: Attribute, bound: Decimal, unit: String },
}

impl Comparison {
    pub fn attribute(&self) -> Attribute {
        match self {
            Comparison::Equal { attribute } | Comparison::WithinAbs { attribute, .. } => *attribute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeRule {
    /// Family this rule applies to; `None` marks the fallback rule.
    pub family: Option<String>,
    pub clauses: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Text(String),
    Number(Decimal),
}

/// Lowercased, whitespace-collapsed form used for assembly equality.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn component_value(c: &PlmComponent, attr: Attribute, rules: &RuleTable) -> Option<Value> {
    match attr {
        Attribute::PackageCode => Some(Value::Text(c.package_code.clone())),
        Attribute::Manufacturer => Some(Value::Text(canonical_manufacturer(&c.manufacturer_name, rules))),
        Attribute::Pitch => c.pitch.map(Value::Number),
        Attribute::PinDimension => c.pin_dimension.map(Value::Number),
        Attribute::AssemblyType => c.assembly_type.as_deref().map(|s| Value::Text(normalize_text(s))),
    }
}

fn card_value(q: &QualificationCard, attr: Attribute, rules: &RuleTable) -> Option<Value> {
    match attr {
        Attribute::PackageCode => Some(Value::Text(q.package_code.clone())),
        Attribute::Manufacturer => Some(Value::Text(canonical_manufacturer(&q.manufacturer_name, rules))),
        Attribute::Pitch => q.pitch.map(Value::Number),
        Attribute::PinDimension => q.pin_dimension.map(Value::Number),
        Attribute::AssemblyType => q.assembly_type.as_deref().map(|s| Value::Text(normalize_text(s))),
    }
}

impl AlternativeRule {
    pub fn flat_package() -> Self {
        Self {
            family: Some("FP".into()),
            clauses: vec![
                Comparison::Equal {
                    attribute: Attribute::PackageCode,
                },
                Comparison::Equal {
                    attribute: Attribute::Pitch,
                },
                Comparison::WithinAbs {
                    attribute: Attribute::PinDimension,
                    bound: Decimal::from(5),
                    unit: "um".into(),
                },
                Comparison::Equal {
                    attribute: Attribute::AssemblyType,
                },
            ],
        }
    }

    pub fn generic() -> Self {
        Self {
            family: None,
            clauses: vec![
                Comparison::Equal {
                    attribute: Attribute::PackageCode,
                },
                Comparison::Equal {
                    attribute: Attribute::Manufacturer,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for clause in &self.clauses {
            if let Comparison::WithinAbs { attribute, bound, .. } = clause {
                if !attribute.is_numeric() {
                    return Err(format!("bound on non-numeric attribute {}", attribute.name()));
                }
                if *bound < Decimal::ZERO {
                    return Err(format!("negative bound on {}", attribute.name()));
                }
            }
        }
        Ok(())
    }

    /// Component attributes the rule needs but the component lacks.
    pub fn missing_attributes(&self, c: &PlmComponent) -> Vec<Attribute> {
        let empty = RuleTable::new();
        self.clauses
            .iter()
            .map(Comparison::attribute)
            .filter(|a| component_value(c, *a, &empty).is_none())
            .collect()
    }

    /// `None` when the component cannot be compared; a card lacking an
    /// attribute simply fails the rule.
    pub fn holds(&self, c: &PlmComponent, q: &QualificationCard, rules: &RuleTable) -> Option<bool> {
        let mut verdict = true;
        for clause in &self.clauses {
            let attr = clause.attribute();
            let left = component_value(c, attr, rules)?;
            let Some(right) = card_value(q, attr, rules) else {
                verdict = false;
                continue;
            };
            let ok = match (clause, &left, &right) {
                (Comparison::Equal { .. }, a, b) => a == b,
                (Comparison::WithinAbs { bound, .. }, Value::Number(a), Value::Number(b)) => (a - b).abs() <= *bound,
                _ => false,
            };
            verdict &= ok;
        }
        Some(verdict)
    }
}

/// Rules keyed by family with a fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRegistry {
    pub rules: Vec<AlternativeRule>,
}

impl Default for RuleRegistry {
    fn default() -> Self {
        Self {
            rules: vec![AlternativeRule::flat_package(), AlternativeRule::generic()],
        }
    }
}

impl RuleRegistry {
    pub fn for_family(&self, family: &str) -> Option<&AlternativeRule> {
        self.rules
            .iter()
            .find(|r| r.family.as_deref() == Some(family))
            .or_else(|| self.rules.iter().find(|r| r.family.is_none()))
    }
}

pub fn fp_rule_holds(c: &PlmComponent, q: &QualificationCard) -> Option<bool> {
    AlternativeRule::flat_package().holds(c, q, &RuleTable::new())
}

pub fn generic_rule_holds(c: &PlmComponent, q: &QualificationCard, rules: &RuleTable) -> bool {
    AlternativeRule::generic().holds(c, q, rules) == Some(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::QualStatus;
    use std::str::FromStr;

    fn fp(pin: &str) -> (PlmComponent, QualificationCard) {
        let mut c = PlmComponent::new("P1", "FP1", "a1", "ABC", "FP");
        c.pitch = Some(Decimal::from_str("1.27").unwrap());
        c.pin_dimension = Some(Decimal::from_str(pin).unwrap());
        c.assembly_type = Some("SMD reflow".into());
        let mut q = QualificationCard::new("qc1", "FP1", "b7", "Other", QualStatus::Closed, "");
        q.pitch = Some(Decimal::from_str("1.270").unwrap());
        q.pin_dimension = Some(Decimal::from(100));
        q.assembly_type = Some("smd  Reflow".into());
        (c, q)
    }

    #[test]
    fn pin_bound_inclusive() {
        for (pin, expect) in [("104", true), ("105", true), ("95", true), ("106", false), ("105.000001", false)] {
            let (c, q) = fp(pin);
            assert_eq!(fp_rule_holds(&c, &q), Some(expect), "pin {pin}");
        }
    }

    #[test]
    fn pitch_is_exact_decimal() {
        let (c, mut q) = fp("100");
        q.pitch = Some(Decimal::from_str("1.2700001").unwrap());
        assert_eq!(fp_rule_holds(&c, &q), Some(false));
    }

    #[test]
    fn missing_component_attribute_is_incomparable() {
        let (mut c, q) = fp("100");
        c.pin_dimension = None;
        assert_eq!(fp_rule_holds(&c, &q), None);
        assert_eq!(AlternativeRule::flat_package().missing_attributes(&c), vec![Attribute::PinDimension]);
    }

    #[test]
    fn generic_rule_uses_canonical_manufacturer() {
        let c = PlmComponent::new("P1", "R1", "a1", "ABC", "Resistor");
        let q = QualificationCard::new("qc3", "R1", "a3", "ABC Inter.", QualStatus::Ongoing, "");
        let rules = RuleTable::from_rows([("ABC Inter.", "ABC")]).unwrap();
        assert!(generic_rule_holds(&c, &q, &rules));
        assert!(!generic_rule_holds(&c, &q, &RuleTable::new()));
    }

    #[test]
    fn registry_falls_back_to_generic() {
        let reg = RuleRegistry::default();
        assert_eq!(reg.for_family("FP").unwrap().family.as_deref(), Some("FP"));
        assert!(reg.for_family("Diode").unwrap().family.is_none());
    }
}
