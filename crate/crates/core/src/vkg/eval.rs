use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde_json::{json, Value};

use super::plan::{Expr, Predicate, RelationalPlan};
use super::store::{Cell, Store, Table};
use super::term::{encode_placeholder, IriTemplate, Segment, Term};
use super::VkgError;

/// Query answers: one column per selected variable, rows sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResultTable {
    pub vars: Vec<String>,
    pub rows: Vec<Vec<Option<Term>>>,
}

impl ResultTable {
    pub fn new(vars: Vec<String>, mut rows: Vec<Vec<Option<Term>>>) -> Self {
        rows.sort();
        Self { vars, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn value(&self, row: usize, var: &str) -> Option<&Term> {
        self.rows.get(row)?.get(self.position(var)?)?.as_ref()
    }

    /// Values of one variable across all rows, nulls skipped.
    pub fn column_values(&self, var: &str) -> Vec<&Term> {
        match self.position(var) {
            Some(p) => self.rows.iter().filter_map(|r| r[p].as_ref()).collect(),
            None => Vec::new(),
        }
    }

    /// SPARQL JSON results layout.
    pub fn to_json(&self) -> Value {
        let bindings: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (v, cell) in self.vars.iter().zip(row) {
                    if let Some(t) = cell {
                        let kind = if t.is_iri() { "uri" } else { "literal" };
                        obj.insert(v.clone(), json!({"type": kind, "value": t.as_str()}));
                    }
                }
                Value::Object(obj)
            })
            .collect();
        json!({"head": {"vars": self.vars}, "results": {"bindings": bindings}})
    }
}

type Row = Vec<Option<Term>>;
type Restrictions = HashMap<String, Arc<HashSet<Term>>>;

struct Rel {
    columns: Vec<String>,
    rows: Vec<Row>,
}

impl Rel {
    fn position(&self, column: &str) -> Result<usize, VkgError> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| VkgError::MissingColumn {
                relation: "intermediate result".into(),
                column: column.to_string(),
            })
    }
}

/// Cell access shared by stored rows (raw strings) and intermediate rows
/// (terms). Stored strings read as plain literals.
trait Cells {
    fn text(&self, pos: usize) -> Option<&str>;
    fn term(&self, pos: usize) -> Option<Term>;
    fn equals(&self, pos: usize, value: &Term) -> bool;
}

impl Cells for [Cell] {
    fn text(&self, pos: usize) -> Option<&str> {
        self[pos].as_deref()
    }
    fn term(&self, pos: usize) -> Option<Term> {
        self[pos].clone().map(Term::Literal)
    }
    fn equals(&self, pos: usize, value: &Term) -> bool {
        matches!((&self[pos], value), (Some(a), Term::Literal(b)) if a == b)
    }
}

impl Cells for [Option<Term>] {
    fn text(&self, pos: usize) -> Option<&str> {
        self[pos].as_ref().map(Term::as_str)
    }
    fn term(&self, pos: usize) -> Option<Term> {
        self[pos].clone()
    }
    fn equals(&self, pos: usize, value: &Term) -> bool {
        self[pos].as_ref() == Some(value)
    }
}

enum CSeg {
    Text(String),
    Col(usize),
}

enum CExpr {
    Column(usize),
    Iri(Vec<CSeg>),
    Const(Term),
}

impl CExpr {
    fn compile(expr: &Expr, position: &dyn Fn(&str) -> Result<usize, VkgError>) -> Result<Self, VkgError> {
        Ok(match expr {
            Expr::Column(c) => CExpr::Column(position(c)?),
            Expr::Const(t) => CExpr::Const(t.clone()),
            Expr::Iri(t) => CExpr::Iri(
                t.segments
                    .iter()
                    .map(|s| match s {
                        Segment::Text(x) => Ok(CSeg::Text(x.clone())),
                        Segment::Column(c) => position(c).map(CSeg::Col),
                    })
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    fn eval<R: Cells + ?Sized>(&self, row: &R) -> Option<Term> {
        match self {
            CExpr::Column(p) => row.term(*p),
            CExpr::Const(t) => Some(t.clone()),
            CExpr::Iri(segs) => {
                let mut out = String::new();
                for s in segs {
                    match s {
                        CSeg::Text(t) => out.push_str(t),
                        CSeg::Col(p) => out.push_str(&encode_placeholder(row.text(*p)?)),
                    }
                }
                Some(Term::iri(out))
            }
        }
    }
}

enum CPred {
    NotNull(usize),
    Equals(usize, Term),
    Same(CExpr, CExpr),
}

impl CPred {
    fn compile(p: &Predicate, position: &dyn Fn(&str) -> Result<usize, VkgError>) -> Result<Self, VkgError> {
        Ok(match p {
            Predicate::NotNull(c) => CPred::NotNull(position(c)?),
            Predicate::Equals(c, t) => CPred::Equals(position(c)?, t.clone()),
            Predicate::Same(a, b) => CPred::Same(CExpr::compile(a, position)?, CExpr::compile(b, position)?),
        })
    }

    fn holds<R: Cells + ?Sized>(&self, row: &R) -> bool {
        match self {
            CPred::NotNull(p) => row.text(*p).is_some(),
            CPred::Equals(p, t) => row.equals(*p, t),
            CPred::Same(a, b) => match (a.eval(row), b.eval(row)) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }
}

pub fn evaluate(plan: &RelationalPlan, store: &Store) -> Result<ResultTable, VkgError> {
    let rel = eval(plan, store, &Restrictions::new())?;
    Ok(ResultTable::new(rel.columns, rel.rows))
}

fn allowed(restrictions: &Restrictions, name: &str, value: &Option<Term>) -> bool {
    match restrictions.get(name) {
        None => true,
        Some(set) => value.as_ref().is_some_and(|v| set.contains(v)),
    }
}

fn eval(plan: &RelationalPlan, store: &Store, restrictions: &Restrictions) -> Result<Rel, VkgError> {
    match plan {
        RelationalPlan::Empty { columns } => Ok(Rel {
            columns: columns.clone(),
            rows: Vec::new(),
        }),
        RelationalPlan::Scan { relation } => {
            let table = store.relation(relation)?;
            Ok(Rel {
                columns: table.columns().to_vec(),
                rows: table
                    .rows()
                    .iter()
                    .map(|r| (0..r.len()).map(|i| r.as_slice().term(i)).collect())
                    .collect(),
            })
        }
        RelationalPlan::Project { input, columns } => {
            let leaf = match input.as_ref() {
                RelationalPlan::Scan { relation } => Some((relation, &[][..])),
                RelationalPlan::Select { input, predicates } => match input.as_ref() {
                    RelationalPlan::Scan { relation } => Some((relation, predicates.as_slice())),
                    _ => None,
                },
                _ => None,
            };
            if let Some((relation, predicates)) = leaf {
                return eval_leaf(&*store.relation(relation)?, predicates, columns, restrictions);
            }
            let mut pushed = Restrictions::new();
            for (name, expr) in columns {
                if let (Some(set), Expr::Column(c)) = (restrictions.get(name), expr) {
                    pushed.insert(c.clone(), set.clone());
                }
            }
            let inner = eval(input, store, &pushed)?;
            let exprs = columns
                .iter()
                .map(|(_, e)| CExpr::compile(e, &|c| inner.position(c)))
                .collect::<Result<Vec<_>, _>>()?;
            let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
            let rows = inner
                .rows
                .iter()
                .map(|row| exprs.iter().map(|e| e.eval(row.as_slice())).collect::<Row>())
                .filter(|row| names.iter().zip(row).all(|(n, v)| allowed(restrictions, n, v)))
                .collect();
            Ok(Rel { columns: names, rows })
        }
        RelationalPlan::Select { input, predicates } => {
            let mut pushed = restrictions.clone();
            for p in predicates {
                if let Predicate::Equals(c, t) = p {
                    let set: HashSet<Term> = match pushed.get(c) {
                        Some(s) if !s.contains(t) => HashSet::new(),
                        _ => HashSet::from([t.clone()]),
                    };
                    pushed.insert(c.clone(), Arc::new(set));
                }
            }
            let inner = eval(input, store, &pushed)?;
            let preds = predicates
                .iter()
                .map(|p| CPred::compile(p, &|c| inner.position(c)))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = inner
                .rows
                .into_iter()
                .filter(|row| preds.iter().all(|p| p.holds(row.as_slice())))
                .collect();
            Ok(Rel {
                columns: inner.columns,
                rows,
            })
        }
        RelationalPlan::Union(children) => {
            let columns = plan.output_columns();
            let mut rows = Vec::new();
            for child in children {
                let rel = eval(child, store, restrictions)?;
                let order = columns
                    .iter()
                    .map(|c| rel.position(c))
                    .collect::<Result<Vec<_>, _>>()?;
                rows.extend(rel.rows.into_iter().map(|r| order.iter().map(|&i| r[i].clone()).collect::<Row>()));
            }
            Ok(Rel { columns, rows })
        }
        RelationalPlan::Join { left, right, keys } => {
            let l = eval(left, store, restrictions)?;
            let mut pushed = restrictions.clone();
            key_restrictions(&l, keys, &mut pushed)?;
            let r = eval(right, store, &pushed)?;
            hash_join(l, r, keys, false)
        }
        RelationalPlan::LeftJoin { left, right, keys } => {
            let l = eval(left, store, restrictions)?;
            let mut pushed = Restrictions::new();
            key_restrictions(&l, keys, &mut pushed)?;
            let r = eval(right, store, &pushed)?;
            hash_join(l, r, keys, true)
        }
    }
}

fn key_restrictions(left: &Rel, keys: &[String], out: &mut Restrictions) -> Result<(), VkgError> {
    for k in keys {
        let p = left.position(k)?;
        let mut set: HashSet<Term> = left.rows.iter().filter_map(|r| r[p].clone()).collect();
        if let Some(prev) = out.get(k) {
            set.retain(|t| prev.contains(t));
        }
        out.insert(k.clone(), Arc::new(set));
    }
    Ok(())
}

fn hash_join(l: Rel, r: Rel, keys: &[String], outer: bool) -> Result<Rel, VkgError> {
    let lk = keys.iter().map(|k| l.position(k)).collect::<Result<Vec<_>, _>>()?;
    let rk = keys.iter().map(|k| r.position(k)).collect::<Result<Vec<_>, _>>()?;
    let rest: Vec<usize> = (0..r.columns.len()).filter(|i| !rk.contains(i)).collect();
    let mut columns = l.columns.clone();
    columns.extend(rest.iter().map(|&i| r.columns[i].clone()));

    let mut table: HashMap<Vec<&Term>, Vec<usize>> = HashMap::new();
    for (i, row) in r.rows.iter().enumerate() {
        let key: Option<Vec<&Term>> = rk.iter().map(|&p| row[p].as_ref()).collect();
        if let Some(key) = key {
            table.entry(key).or_default().push(i);
        }
    }
    let mut rows = Vec::new();
    for lrow in &l.rows {
        let key: Option<Vec<&Term>> = lk.iter().map(|&p| lrow[p].as_ref()).collect();
        let matches = key.and_then(|k| table.get(&k));
        match matches {
            Some(ms) => {
                for &m in ms {
                    let mut row = lrow.clone();
                    row.extend(rest.iter().map(|&i| r.rows[m][i].clone()));
                    rows.push(row);
                }
            }
            None if outer => {
                let mut row = lrow.clone();
                row.extend(rest.iter().map(|_| None));
                rows.push(row);
            }
            None => {}
        }
    }
    Ok(Rel { columns, rows })
}

/// Candidate row numbers for restricted outputs, via column indexes.
fn restricted_rows(table: &Table, template: &IriTemplate, values: &HashSet<Term>) -> Option<Vec<u32>> {
    if !template.is_injective() {
        return None;
    }
    let first = template.columns().next()?;
    let ix = table.index(table.position(first)?);
    let mut out = Vec::new();
    for v in values {
        let Term::Iri(iri) = v else { continue };
        if let Some(cols) = template.invert(iri) {
            if let Some((_, value)) = cols.into_iter().find(|(c, _)| c == first) {
                if let Some(rows) = ix.get(value.as_str()) {
                    out.extend_from_slice(rows);
                }
            }
        }
    }
    Some(out)
}

fn eval_leaf(
    table: &Table,
    predicates: &[Predicate],
    outputs: &[(String, Expr)],
    restrictions: &Restrictions,
) -> Result<Rel, VkgError> {
    let position = |c: &str| table.column_position(c);
    let preds = predicates
        .iter()
        .map(|p| CPred::compile(p, &position))
        .collect::<Result<Vec<_>, _>>()?;
    let exprs = outputs
        .iter()
        .map(|(_, e)| CExpr::compile(e, &position))
        .collect::<Result<Vec<_>, _>>()?;

    let mut candidates: Option<Vec<u32>> = None;
    let mut narrow = |rows: Vec<u32>| {
        if candidates.as_ref().is_none_or(|c| rows.len() < c.len()) {
            candidates = Some(rows);
        }
    };
    for p in predicates {
        if let Predicate::Equals(c, Term::Literal(v)) = p {
            let ix = table.index(position(c)?);
            narrow(ix.get(&**v).cloned().unwrap_or_default());
        }
    }
    for (name, expr) in outputs {
        let Some(set) = restrictions.get(name) else { continue };
        match expr {
            Expr::Column(c) => {
                let ix = table.index(position(c)?);
                let mut rows = Vec::new();
                for v in set.iter() {
                    if let Term::Literal(s) = v {
                        if let Some(r) = ix.get(&**s) {
                            rows.extend_from_slice(r);
                        }
                    }
                }
                narrow(rows);
            }
            Expr::Iri(t) => {
                if let Some(rows) = restricted_rows(table, t, set) {
                    narrow(rows);
                }
            }
            Expr::Const(_) => {}
        }
    }

    let names: Vec<String> = outputs.iter().map(|(n, _)| n.clone()).collect();
    let mut rows = Vec::new();
    let mut visit = |raw: &[Cell]| {
        if !preds.iter().all(|p| p.holds(raw)) {
            return;
        }
        let row: Row = exprs.iter().map(|e| e.eval(raw)).collect();
        if names.iter().zip(&row).all(|(n, v)| allowed(restrictions, n, v)) {
            rows.push(row);
        }
    };
    match candidates {
        Some(mut ids) => {
            ids.sort_unstable();
            ids.dedup();
            for i in ids {
                visit(&table.rows()[i as usize]);
            }
        }
        None => table.rows().iter().for_each(|r| visit(r)),
    }
    Ok(Rel { columns: names, rows })
}
