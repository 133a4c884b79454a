use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, OnceLock, RwLock};

use sha2::{Digest, Sha256};

use super::VkgError;
use crate::dataset::{plm_cells, qc_cells, Dataset, PLM_COLUMNS, QC_COLUMNS, RULE_COLUMNS};
use crate::domain::RuleTable;

pub const PLM_TABLE: &str = "plmdb";
pub const QC_TABLE: &str = "qc";
pub const RULES_TABLE: &str = "rules";
pub const QC_MANUFACTURER_LENS: &str = "lenses.qualification_manufacturer";
pub const PLM_MANUFACTURER_LENS: &str = "lenses.component_manufacturer";
pub const CANONICAL_COLUMN: &str = "canonical_manufacturer_name";

pub type Cell = Option<Arc<str>>;

type ColumnIndex = HashMap<Arc<str>, Vec<u32>>;

/// An immutable in-memory relation. Null cells are `None`.
#[derive(Debug)]
pub struct Table {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    keys: Vec<Vec<String>>,
    indexes: RwLock<HashMap<usize, Arc<ColumnIndex>>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, VkgError> {
        let name = name.into();
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c) {
                return Err(VkgError::Registration(format!("table {name} repeats column {c}")));
            }
        }
        if let Some(i) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(VkgError::Registration(format!(
                "table {name}: row {i} has {} cells, expected {}",
                rows[i].len(),
                columns.len()
            )));
        }
        Ok(Self {
            name,
            columns,
            rows,
            keys: Vec::new(),
            indexes: RwLock::new(HashMap::new()),
        })
    }

    /// Builds a table from string rows; empty strings become nulls.
    pub fn from_strings<R, S>(name: &str, columns: &[&str], rows: R) -> Result<Self, VkgError>
    where
        R: IntoIterator,
        R::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let rows = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|s| {
                        let s = s.as_ref();
                        (!s.is_empty()).then(|| Arc::from(s))
                    })
                    .collect()
            })
            .collect();
        Self::new(name, columns.iter().map(|c| c.to_string()).collect(), rows)
    }

    /// Declares a unique key after checking every row has distinct,
    /// non-null values for it.
    pub fn with_key(mut self, key: &[&str]) -> Result<Self, VkgError> {
        let positions = key
            .iter()
            .map(|c| self.column_position(c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut seen: HashSet<Vec<&str>> = HashSet::with_capacity(self.rows.len());
        for row in &self.rows {
            let values: Option<Vec<&str>> = positions.iter().map(|&p| row[p].as_deref()).collect();
            let values = values.ok_or_else(|| {
                VkgError::Registration(format!("table {}: key ({}) has a null value", self.name, key.join(", ")))
            })?;
            if !seen.insert(values.clone()) {
                return Err(VkgError::Registration(format!(
                    "table {}: duplicate key ({}) = ({})",
                    self.name,
                    key.join(", "),
                    values.join(", ")
                )));
            }
        }
        self.keys.push(key.iter().map(|c| c.to_string()).collect());
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn keys(&self) -> &[Vec<String>] {
        &self.keys
    }

    pub fn position(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn column_position(&self, column: &str) -> Result<usize, VkgError> {
        self.position(column).ok_or_else(|| VkgError::MissingColumn {
            relation: self.name.clone(),
            column: column.to_string(),
        })
    }

    /// Row numbers per value of one column, built on first use.
    pub fn index(&self, position: usize) -> Arc<ColumnIndex> {
        if let Some(ix) = self.indexes.read().expect("index lock").get(&position) {
            return ix.clone();
        }
        let mut ix: ColumnIndex = HashMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(v) = &row[position] {
                ix.entry(v.clone()).or_default().push(i as u32);
            }
        }
        let ix = Arc::new(ix);
        self.indexes.write().expect("index lock").insert(position, ix.clone());
        ix
    }

    /// SHA-256 over the table's cells, for detecting modification.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update(c.as_bytes());
            h.update([0]);
        }
        for row in &self.rows {
            for cell in row {
                match cell {
                    Some(v) => {
                        h.update([1]);
                        h.update(v.as_bytes());
                        h.update([0]);
                    }
                    None => h.update([2]),
                }
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LensDef {
    pub name: String,
    pub base_table: String,
    pub rule_table: String,
    pub raw_column: String,
    pub output_column: String,
}

impl LensDef {
    pub fn manufacturer(name: &str, base_table: &str) -> Self {
        Self {
            name: name.to_string(),
            base_table: base_table.to_string(),
            rule_table: RULES_TABLE.to_string(),
            raw_column: "manufacturer_name".to_string(),
            output_column: CANONICAL_COLUMN.to_string(),
        }
    }
}

#[derive(Debug)]
struct Lens {
    def: LensDef,
    cache: OnceLock<Arc<Table>>,
}

/// Handle returned by lens registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualRelation {
    pub name: String,
    pub columns: Vec<String>,
}

/// A set of named tables and lenses over them. Lens rows are computed on
/// first read and dropped whenever a table they depend on is replaced.
#[derive(Debug, Default)]
pub struct Store {
    tables: BTreeMap<String, Arc<Table>>,
    lenses: BTreeMap<String, Lens>,
}

impl Clone for Store {
    fn clone(&self) -> Self {
        Self {
            tables: self.tables.clone(),
            lenses: self
                .lenses
                .iter()
                .map(|(k, l)| {
                    let cache = OnceLock::new();
                    if let Some(t) = l.cache.get() {
                        let _ = cache.set(t.clone());
                    }
                    (
                        k.clone(),
                        Lens {
                            def: l.def.clone(),
                            cache,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a table, invalidating lenses built on it.
    pub fn insert_table(&mut self, table: Table) {
        let name = table.name.clone();
        self.tables.insert(name.clone(), Arc::new(table));
        for lens in self.lenses.values_mut() {
            if lens.def.base_table == name || lens.def.rule_table == name {
                lens.cache = OnceLock::new();
            }
        }
    }

    pub fn table(&self, name: &str) -> Option<&Arc<Table>> {
        self.tables.get(name)
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn lens_defs(&self) -> impl Iterator<Item = &LensDef> {
        self.lenses.values().map(|l| &l.def)
    }

    pub fn register_lens(&mut self, def: LensDef) -> Result<VirtualRelation, VkgError> {
        let base = self
            .tables
            .get(&def.base_table)
            .ok_or_else(|| VkgError::MissingRelation(def.base_table.clone()))?;
        let rules = self
            .tables
            .get(&def.rule_table)
            .ok_or_else(|| VkgError::MissingRelation(def.rule_table.clone()))?;
        base.column_position(&def.raw_column)?;
        for c in RULE_COLUMNS {
            rules.column_position(c)?;
        }
        if base.position(&def.output_column).is_some() {
            return Err(VkgError::Registration(format!(
                "lens {}: output column {} already exists in {}",
                def.name, def.output_column, def.base_table
            )));
        }
        if self.tables.contains_key(&def.name) {
            return Err(VkgError::Registration(format!("lens {} shadows a table", def.name)));
        }
        let mut columns = base.columns.clone();
        columns.push(def.output_column.clone());
        let handle = VirtualRelation {
            name: def.name.clone(),
            columns,
        };
        self.lenses.insert(
            def.name.clone(),
            Lens {
                def,
                cache: OnceLock::new(),
            },
        );
        Ok(handle)
    }

    /// Resolves a table or lens by name.
    pub fn relation(&self, name: &str) -> Result<Arc<Table>, VkgError> {
        if let Some(t) = self.tables.get(name) {
            return Ok(t.clone());
        }
        let lens = self
            .lenses
            .get(name)
            .ok_or_else(|| VkgError::MissingRelation(name.to_string()))?;
        if let Some(t) = lens.cache.get() {
            return Ok(t.clone());
        }
        let built = Arc::new(self.materialize_lens(&lens.def)?);
        Ok(lens.cache.get_or_init(|| built).clone())
    }

    /// The table a relation's rows come from: the base of a lens, or the
    /// table itself.
    pub fn base_of<'s>(&'s self, name: &'s str) -> &'s str {
        self.lenses.get(name).map(|l| l.def.base_table.as_str()).unwrap_or(name)
    }

    fn materialize_lens(&self, def: &LensDef) -> Result<Table, VkgError> {
        let base = self
            .tables
            .get(&def.base_table)
            .ok_or_else(|| VkgError::MissingRelation(def.base_table.clone()))?;
        let rules = self
            .tables
            .get(&def.rule_table)
            .ok_or_else(|| VkgError::MissingRelation(def.rule_table.clone()))?;
        let raw_pos = rules.column_position(RULE_COLUMNS[0])?;
        let canon_pos = rules.column_position(RULE_COLUMNS[1])?;
        let mut lookup: HashMap<&str, Arc<str>> = HashMap::new();
        for row in &rules.rows {
            if let (Some(raw), Some(canon)) = (&row[raw_pos], &row[canon_pos]) {
                lookup.entry(raw.trim()).or_insert_with(|| canon.clone());
            }
        }
        let pos = base.column_position(&def.raw_column)?;
        let mut columns = base.columns.clone();
        columns.push(def.output_column.clone());
        let rows = base
            .rows
            .iter()
            .map(|row| {
                let mut out = row.clone();
                let mapped = row[pos]
                    .as_ref()
                    .map(|raw| lookup.get(raw.trim()).cloned().unwrap_or_else(|| raw.clone()));
                out.push(mapped);
                out
            })
            .collect();
        let mut table = Table::new(def.name.clone(), columns, rows)?;
        table.keys = base.keys.clone();
        Ok(table)
    }

    /// The qualification store: `plmdb`, `qc`, `rules` and the two
    /// manufacturer lenses.
    pub fn from_dataset(data: &Dataset) -> Result<Self, VkgError> {
        let mut store = Store::new();
        let plm = Table::from_strings(PLM_TABLE, &PLM_COLUMNS, data.plm.iter().map(plm_cells))?
            .with_key(&PLM_COLUMNS[..4])?;
        let qc = Table::from_strings(QC_TABLE, &QC_COLUMNS, data.qc.iter().map(qc_cells))?.with_key(&["number"])?;
        store.insert_table(plm);
        store.insert_table(qc);
        store.insert_table(rules_table(&data.rules)?);
        store.register_lens(LensDef::manufacturer(QC_MANUFACTURER_LENS, QC_TABLE))?;
        store.register_lens(LensDef::manufacturer(PLM_MANUFACTURER_LENS, PLM_TABLE))?;
        Ok(store)
    }

    /// Copy of this store with a different rule table.
    pub fn with_rules(&self, rules: &RuleTable) -> Result<Self, VkgError> {
        let mut next = self.clone();
        next.insert_table(rules_table(rules)?);
        Ok(next)
    }
}

pub fn rules_table(rules: &RuleTable) -> Result<Table, VkgError> {
    Table::from_strings(RULES_TABLE, &RULE_COLUMNS, rules.rows().map(|(a, b)| [a, b]))?.with_key(&["raw_name"])
}

/// Snapshot-swapping wrapper: readers get a consistent `Arc<Store>`;
/// rule updates build a new store and replace it under an exclusive lock.
#[derive(Debug, Default)]
pub struct SharedStore {
    inner: RwLock<Arc<Store>>,
}

impl SharedStore {
    pub fn new(store: Store) -> Self {
        Self {
            inner: RwLock::new(Arc::new(store)),
        }
    }

    pub fn snapshot(&self) -> Arc<Store> {
        self.inner.read().expect("store lock").clone()
    }

    pub fn replace(&self, store: Store) {
        *self.inner.write().expect("store lock") = Arc::new(store);
    }

    pub fn update_rules(&self, rules: &RuleTable) -> Result<Arc<Store>, VkgError> {
        let mut guard = self.inner.write().expect("store lock");
        let next = Arc::new(guard.with_rules(rules)?);
        *guard = next.clone();
        Ok(next)
    }
}
