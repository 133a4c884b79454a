//! CSV schemas for the two source databases and the manufacturer rule table.
//!
//! All files are UTF-8 with a header row and RFC-4180 quoting. Empty cells
//! stand for absent optional values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{parse_decimal, DomainError, PlmComponent, QualStatus, QualificationCard, RuleTable};

pub const PLM_COLUMNS: [&str; 14] = [
    "part_number",
    "package",
    "subpackage_code",
    "manufacturer_name",
    "family",
    "pitch",
    "pin_dimension_um",
    "lead_finish",
    "raw_material",
    "package_length_mm",
    "package_width_mm",
    "package_height_mm",
    "assembly_type",
    "generic_pn",
];

pub const QC_COLUMNS: [&str; 16] = [
    "number",
    "package",
    "subpackage_code",
    "manufacturer_name",
    "status",
    "qualification_type",
    "description",
    "documentation",
    "conformal_coating",
    "substrate_material",
    "assembly_type",
    "pitch",
    "pin_dimension_um",
    "family",
    "notes",
    "part_number",
];

pub const RULE_COLUMNS: [&str; 2] = ["raw_name", "canonical_name"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
    #[error("{context}: missing column `{column}`")]
    MissingColumn { context: String, column: String },
    #[error("{context} row {row}: {source}")]
    Invalid {
        context: String,
        row: usize,
        #[source]
        source: DomainError,
    },
    #[error("{context}: duplicate {what} `{key}`")]
    Duplicate {
        context: String,
        what: &'static str,
        key: String,
    },
    #[error("{context}: {source}")]
    Rules {
        context: String,
        #[source]
        source: DomainError,
    },
}

impl DatasetError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.into(),
            source,
        }
    }
}

fn dec(v: &Option<Decimal>) -> String {
    v.map(|d| d.to_string()).unwrap_or_default()
}

fn opt(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("")
}

fn nonempty(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}

struct Header {
    positions: HashMap<String, usize>,
    context: String,
}

impl Header {
    fn new(record: &csv::StringRecord, required: &[&str], context: &str) -> Result<Self, DatasetError> {
        let positions: HashMap<String, usize> = record
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for column in required {
            if !positions.contains_key(*column) {
                return Err(DatasetError::MissingColumn {
                    context: context.to_string(),
                    column: column.to_string(),
                });
            }
        }
        Ok(Self {
            positions,
            context: context.to_string(),
        })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, column: &str) -> &'r str {
        self.positions
            .get(column)
            .and_then(|&i| record.get(i))
            .unwrap_or("")
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

fn csv_err(context: &str) -> impl Fn(csv::Error) -> DatasetError + '_ {
    move |source| DatasetError::Csv {
        context: context.to_string(),
        source,
    }
}

pub fn read_plm<R: Read>(input: R, context: &str) -> Result<Vec<PlmComponent>, DatasetError> {
    let mut rdr = reader(input);
    let header = Header::new(rdr.headers().map_err(csv_err(context))?, &PLM_COLUMNS[..6], context)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(context))?;
        let row = i + 1;
        let g = |c: &str| header.get(&record, c);
        let invalid = |source| DatasetError::Invalid {
            context: header.context.clone(),
            row,
            source,
        };
        let component = PlmComponent {
            part_number: g("part_number").to_string(),
            package_code: g("package").to_string(),
            subpackage_code: g("subpackage_code").to_string(),
            manufacturer_name: g("manufacturer_name").to_string(),
            family: g("family").to_string(),
            pitch: parse_decimal("pitch", g("pitch")).map_err(invalid)?,
            pin_dimension: parse_decimal("pin_dimension_um", g("pin_dimension_um")).map_err(invalid)?,
            lead_finish: nonempty(g("lead_finish")),
            raw_material: nonempty(g("raw_material")),
            package_length: parse_decimal("package_length_mm", g("package_length_mm")).map_err(invalid)?,
            package_width: parse_decimal("package_width_mm", g("package_width_mm")).map_err(invalid)?,
            package_height: parse_decimal("package_height_mm", g("package_height_mm")).map_err(invalid)?,
            assembly_type: nonempty(g("assembly_type")),
            generic_pn: nonempty(g("generic_pn")),
        };
        component.validate().map_err(invalid)?;
        let key = format!(
            "{}/{}/{}/{}",
            component.part_number, component.package_code, component.subpackage_code, component.manufacturer_name
        );
        if !seen.insert(key.clone()) {
            return Err(DatasetError::Duplicate {
                context: context.to_string(),
                what: "component",
                key,
            });
        }
        out.push(component);
    }
    Ok(out)
}

/// The cells of one plm.csv row, in `PLM_COLUMNS` order; empty means absent.
pub fn plm_cells(c: &PlmComponent) -> [String; 14] {
    [
        c.part_number.clone(),
        c.package_code.clone(),
        c.subpackage_code.clone(),
        c.manufacturer_name.clone(),
        c.family.clone(),
        dec(&c.pitch),
        dec(&c.pin_dimension),
        opt(&c.lead_finish).to_string(),
        opt(&c.raw_material).to_string(),
        dec(&c.package_length),
        dec(&c.package_width),
        dec(&c.package_height),
        opt(&c.assembly_type).to_string(),
        opt(&c.generic_pn).to_string(),
    ]
}

pub fn write_plm<W: Write>(out: W, components: &[PlmComponent]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let ctx = csv_err("plm.csv");
    w.write_record(PLM_COLUMNS).map_err(&ctx)?;
    for c in components {
        w.write_record(plm_cells(c)).map_err(&ctx)?;
    }
    w.flush().map_err(|e| DatasetError::io("plm.csv", e))?;
    Ok(())
}

pub fn read_qc<R: Read>(input: R, context: &str) -> Result<Vec<QualificationCard>, DatasetError> {
    let mut rdr = reader(input);
    let header = Header::new(rdr.headers().map_err(csv_err(context))?, &QC_COLUMNS[..5], context)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(context))?;
        let row = i + 1;
        let g = |c: &str| header.get(&record, c);
        let invalid = |source| DatasetError::Invalid {
            context: header.context.clone(),
            row,
            source,
        };
        let card = QualificationCard {
            number: g("number").to_string(),
            package_code: g("package").to_string(),
            subpackage_code: g("subpackage_code").to_string(),
            manufacturer_name: g("manufacturer_name").to_string(),
            status: g("status").parse::<QualStatus>().map_err(invalid)?,
            notes: g("notes").to_string(),
            part_number: nonempty(g("part_number")),
            qualification_type: nonempty(g("qualification_type")),
            description: nonempty(g("description")),
            documentation: nonempty(g("documentation")),
            conformal_coating: nonempty(g("conformal_coating")),
            substrate_material: nonempty(g("substrate_material")),
            assembly_type: nonempty(g("assembly_type")),
            pitch: parse_decimal("pitch", g("pitch")).map_err(invalid)?,
            pin_dimension: parse_decimal("pin_dimension_um", g("pin_dimension_um")).map_err(invalid)?,
            family: nonempty(g("family")),
        };
        card.validate().map_err(invalid)?;
        if !seen.insert(card.number.clone()) {
            return Err(DatasetError::Duplicate {
                context: context.to_string(),
                what: "qualification number",
                key: card.number,
            });
        }
        out.push(card);
    }
    Ok(out)
}

/// The cells of one qc.csv row, in `QC_COLUMNS` order; empty means absent.
pub fn qc_cells(c: &QualificationCard) -> [String; 16] {
    [
        c.number.clone(),
        c.package_code.clone(),
        c.subpackage_code.clone(),
        c.manufacturer_name.clone(),
        c.status.as_str().to_string(),
        opt(&c.qualification_type).to_string(),
        opt(&c.description).to_string(),
        opt(&c.documentation).to_string(),
        opt(&c.conformal_coating).to_string(),
        opt(&c.substrate_material).to_string(),
        opt(&c.assembly_type).to_string(),
        dec(&c.pitch),
        dec(&c.pin_dimension),
        opt(&c.family).to_string(),
        c.notes.clone(),
        opt(&c.part_number).to_string(),
    ]
}

pub fn write_qc<W: Write>(out: W, cards: &[QualificationCard]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let ctx = csv_err("qc.csv");
    w.write_record(QC_COLUMNS).map_err(&ctx)?;
    for c in cards {
        w.write_record(qc_cells(c)).map_err(&ctx)?;
    }
    w.flush().map_err(|e| DatasetError::io("qc.csv", e))?;
    Ok(())
}

pub fn read_rules<R: Read>(input: R, context: &str) -> Result<RuleTable, DatasetError> {
    let mut rdr = reader(input);
    let header = Header::new(rdr.headers().map_err(csv_err(context))?, &RULE_COLUMNS, context)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(context))?;
        rows.push((
            header.get(&record, "raw_name").to_string(),
            header.get(&record, "canonical_name").to_string(),
        ));
    }
    RuleTable::from_rows(rows).map_err(|source| DatasetError::Rules {
        context: context.to_string(),
        source,
    })
}

pub fn write_rules<W: Write>(out: W, rules: &RuleTable) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let ctx = csv_err("rules.csv");
    w.write_record(RULE_COLUMNS).map_err(&ctx)?;
    for (raw, canonical) in rules.rows() {
        w.write_record([raw, canonical]).map_err(&ctx)?;
    }
    w.flush().map_err(|e| DatasetError::io("rules.csv", e))?;
    Ok(())
}

fn open(path: &Path) -> Result<File, DatasetError> {
    File::open(path).map_err(|e| DatasetError::io(path, e))
}

fn create(path: &Path) -> Result<File, DatasetError> {
    File::create(path).map_err(|e| DatasetError::io(path, e))
}

pub fn load_plm(path: &Path) -> Result<Vec<PlmComponent>, DatasetError> {
    read_plm(open(path)?, &path.display().to_string())
}

pub fn load_qc(path: &Path) -> Result<Vec<QualificationCard>, DatasetError> {
    read_qc(open(path)?, &path.display().to_string())
}

pub fn load_rules(path: &Path) -> Result<RuleTable, DatasetError> {
    read_rules(open(path)?, &path.display().to_string())
}

pub fn save_plm(path: &Path, components: &[PlmComponent]) -> Result<(), DatasetError> {
    write_plm(create(path)?, components)
}

pub fn save_qc(path: &Path, cards: &[QualificationCard]) -> Result<(), DatasetError> {
    write_qc(create(path)?, cards)
}

pub fn save_rules(path: &Path, rules: &RuleTable) -> Result<(), DatasetError> {
    write_rules(create(path)?, rules)
}

/// Hex SHA-256 of a file's bytes.
pub fn fingerprint(path: &Path) -> Result<String, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Both source databases plus the manufacturer rule table.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub plm: Vec<PlmComponent>,
    pub qc: Vec<QualificationCard>,
    pub rules: RuleTable,
}

impl Dataset {
    pub fn new(plm: Vec<PlmComponent>, qc: Vec<QualificationCard>, rules: RuleTable) -> Self {
        Self { plm, qc, rules }
    }

    /// PLM rows carrying the given part number, in file order.
    pub fn components_by_pn(&self, pn: &str) -> Vec<&PlmComponent> {
        self.plm.iter().filter(|c| c.part_number == pn).collect()
    }

    pub fn card(&self, number: &str) -> Option<&QualificationCard> {
        self.qc.iter().find(|c| c.number == number)
    }

    pub fn cards_by_number(&self) -> BTreeMap<&str, &QualificationCard> {
        self.qc.iter().map(|c| (c.number.as_str(), c)).collect()
    }
}
