//! Canonical JSON rendering of records for embedding.
//!
//! Keys are sorted, absent optionals are omitted, decimals are numbers with
//! minimal digits and the manufacturer is rendered in canonical form under
//! the key `manufacturer`.

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde_json::{Map, Number, Value};

use crate::domain::{canonical_manufacturer, PlmComponent, QualificationCard, RuleTable};

pub fn decimal_value(d: Decimal) -> Value {
    let d = d.normalize();
    if d.scale() == 0 {
        if let Some(i) = d.to_i64() {
            return Value::Number(i.into());
        }
    }
    let f: f64 = d.to_string().parse().expect("decimal renders as float");
    Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null)
}

fn put(map: &mut Map<String, Value>, key: &str, value: Option<Value>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v);
    }
}

fn text(s: &Option<String>) -> Option<Value> {
    s.as_ref().map(|s| Value::String(s.clone()))
}

pub fn component_value(c: &PlmComponent, rules: &RuleTable) -> Value {
    let mut m = Map::new();
    m.insert("part_number".into(), c.part_number.clone().into());
    m.insert("package_code".into(), c.package_code.clone().into());
    m.insert("subpackage_code".into(), c.subpackage_code.clone().into());
    m.insert("manufacturer".into(), canonical_manufacturer(&c.manufacturer_name, rules).into());
    m.insert("family".into(), c.family.clone().into());
    put(&mut m, "pitch_mm", c.pitch.map(decimal_value));
    put(&mut m, "pin_dimension_um", c.pin_dimension.map(decimal_value));
    put(&mut m, "lead_finish", text(&c.lead_finish));
    put(&mut m, "raw_material", text(&c.raw_material));
    put(&mut m, "package_length_mm", c.package_length.map(decimal_value));
    put(&mut m, "package_width_mm", c.package_width.map(decimal_value));
    put(&mut m, "package_height_mm", c.package_height.map(decimal_value));
    put(&mut m, "assembly_type", text(&c.assembly_type));
    put(&mut m, "generic_pn", text(&c.generic_pn));
    Value::Object(m)
}

pub fn card_value(q: &QualificationCard, rules: &RuleTable) -> Value {
    let mut m = Map::new();
    m.insert("number".into(), q.number.clone().into());
    m.insert("package_code".into(), q.package_code.clone().into());
    m.insert("subpackage_code".into(), q.subpackage_code.clone().into());
    m.insert("manufacturer".into(), canonical_manufacturer(&q.manufacturer_name, rules).into());
    m.insert("status".into(), q.status.as_str().into());
    m.insert("notes".into(), q.notes.clone().into());
    put(&mut m, "part_number", text(&q.part_number));
    put(&mut m, "qualification_type", text(&q.qualification_type));
    put(&mut m, "description", text(&q.description));
    put(&mut m, "documentation", text(&q.documentation));
    put(&mut m, "conformal_coating", text(&q.conformal_coating));
    put(&mut m, "substrate_material", text(&q.substrate_material));
    put(&mut m, "assembly_type", text(&q.assembly_type));
    put(&mut m, "pitch_mm", q.pitch.map(decimal_value));
    put(&mut m, "pin_dimension_um", q.pin_dimension.map(decimal_value));
    put(&mut m, "family", text(&q.family));
    Value::Object(m)
}

pub fn component_json(c: &PlmComponent, rules: &RuleTable) -> String {
    component_value(c, rules).to_string()
}

pub fn card_json(q: &QualificationCard, rules: &RuleTable) -> String {
    card_value(q, rules).to_string()
}
