use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::mapping::{MappingSet, TermTemplate};
use super::query::{pattern_vars, PatternTerm, QueryAst, TriplePattern};
use super::store::Store;
use super::term::{IriTemplate, Term};

/// A value computed from one input row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    /// The cell itself (a plain literal at scan level).
    Column(String),
    /// An IRI rendered from a template over input cells.
    Iri(IriTemplate),
    Const(Term),
}

impl Expr {
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Expr::Column(c) => vec![c.as_str()],
            Expr::Iri(t) => t.columns().collect(),
            Expr::Const(_) => Vec::new(),
        }
    }

    /// Whether the two expressions could ever yield the same term.
    pub fn compatible(&self, other: &Expr) -> bool {
        match (self, other) {
            (Expr::Const(a), Expr::Const(b)) => a == b,
            (Expr::Iri(t), Expr::Const(Term::Iri(i))) | (Expr::Const(Term::Iri(i)), Expr::Iri(t)) => {
                i.starts_with(t.prefix()) && (!t.is_injective() || t.invert(i).is_some())
            }
            (Expr::Iri(a), Expr::Iri(b)) => a.prefix().starts_with(b.prefix()) || b.prefix().starts_with(a.prefix()),
            (Expr::Iri(_), _) | (_, Expr::Iri(_)) => false,
            (Expr::Column(_), Expr::Const(t)) | (Expr::Const(t), Expr::Column(_)) => !t.is_iri(),
            (Expr::Column(_), Expr::Column(_)) => true,
        }
    }

    fn from_template(t: &TermTemplate) -> Expr {
        match t {
            TermTemplate::Iri(t) if t.is_constant() => Expr::Const(Term::iri(t.constant_text().unwrap_or_default())),
            TermTemplate::Iri(t) => Expr::Iri(t.clone()),
            TermTemplate::Column(c) => Expr::Column(c.clone()),
            TermTemplate::Literal(l) => Expr::Const(Term::literal(l)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => f.write_str(c),
            Expr::Iri(t) => write!(f, "<{t}>"),
            Expr::Const(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    NotNull(String),
    /// The column's value equals the term.
    Equals(String, Term),
    /// Both expressions are defined and equal.
    Same(Expr, Expr),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::NotNull(c) => write!(f, "{c} IS NOT NULL"),
            Predicate::Equals(c, t) => write!(f, "{c} = {t}"),
            Predicate::Same(a, b) => write!(f, "{a} = {b}"),
        }
    }
}

/// Relational algebra over the store. Scan outputs the relation's columns;
/// Project names its outputs (query variables).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationalPlan {
    Scan { relation: String },
    Select { input: Box<RelationalPlan>, predicates: Vec<Predicate> },
    Project { input: Box<RelationalPlan>, columns: Vec<(String, Expr)> },
    Join { left: Box<RelationalPlan>, right: Box<RelationalPlan>, keys: Vec<String> },
    LeftJoin { left: Box<RelationalPlan>, right: Box<RelationalPlan>, keys: Vec<String> },
    Union(Vec<RelationalPlan>),
    Empty { columns: Vec<String> },
}

impl RelationalPlan {
    /// Output column names, or `None` for a bare scan (relation columns).
    pub fn output_columns(&self) -> Vec<String> {
        match self {
            RelationalPlan::Scan { .. } => Vec::new(),
            RelationalPlan::Select { input, .. } => input.output_columns(),
            RelationalPlan::Project { columns, .. } => columns.iter().map(|(c, _)| c.clone()).collect(),
            RelationalPlan::Join { left, right, .. } | RelationalPlan::LeftJoin { left, right, .. } => {
                let mut out = left.output_columns();
                for c in right.output_columns() {
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
                out
            }
            RelationalPlan::Union(children) => children.first().map(|c| c.output_columns()).unwrap_or_default(),
            RelationalPlan::Empty { columns } => columns.clone(),
        }
    }

    pub fn scans(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            if let RelationalPlan::Scan { relation } = p {
                out.push(relation.as_str());
            }
        });
        out
    }

    pub fn count_nodes(&self, pred: fn(&RelationalPlan) -> bool) -> usize {
        let mut n = 0;
        self.walk(&mut |p| {
            if pred(p) {
                n += 1;
            }
        });
        n
    }

    fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a RelationalPlan)) {
        f(self);
        match self {
            RelationalPlan::Scan { .. } | RelationalPlan::Empty { .. } => {}
            RelationalPlan::Select { input, .. } | RelationalPlan::Project { input, .. } => input.walk(f),
            RelationalPlan::Join { left, right, .. } | RelationalPlan::LeftJoin { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            RelationalPlan::Union(children) => children.iter().for_each(|c| c.walk(f)),
        }
    }

    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            RelationalPlan::Scan { relation } => writeln!(f, "{pad}Scan {relation}"),
            RelationalPlan::Select { input, predicates } => {
                let p: Vec<String> = predicates.iter().map(|p| p.to_string()).collect();
                writeln!(f, "{pad}Select [{}]", p.join(" AND "))?;
                input.fmt_indent(f, depth + 1)
            }
            RelationalPlan::Project { input, columns } => {
                let c: Vec<String> = columns.iter().map(|(v, e)| format!("?{v} := {e}")).collect();
                writeln!(f, "{pad}Project [{}]", c.join(", "))?;
                input.fmt_indent(f, depth + 1)
            }
            RelationalPlan::Join { left, right, keys } | RelationalPlan::LeftJoin { left, right, keys } => {
                let name = if matches!(self, RelationalPlan::Join { .. }) { "Join" } else { "LeftJoin" };
                let k: Vec<String> = keys.iter().map(|k| format!("?{k}")).collect();
                writeln!(f, "{pad}{name} on [{}]", k.join(", "))?;
                left.fmt_indent(f, depth + 1)?;
                right.fmt_indent(f, depth + 1)
            }
            RelationalPlan::Union(children) => {
                writeln!(f, "{pad}Union")?;
                children.iter().try_for_each(|c| c.fmt_indent(f, depth + 1))
            }
            RelationalPlan::Empty { columns } => writeln!(f, "{pad}Empty [{}]", columns.join(", ")),
        }
    }
}

impl fmt::Display for RelationalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnfoldedQuery {
    pub plan: RelationalPlan,
    /// Patterns that matched no mapping, and other notes.
    pub diagnostics: Vec<String>,
}

/// One way of producing a pattern's bindings from a mapping source row.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Atom {
    relation: String,
    predicates: BTreeSet<Predicate>,
    outputs: Vec<(String, Expr)>,
    /// Subject variable and template, when the subject is a variable bound
    /// by an IRI template.
    subject: Option<(String, IriTemplate)>,
}

impl Atom {
    fn output(&self, var: &str) -> Option<&Expr> {
        self.outputs.iter().find(|(v, _)| v == var).map(|(_, e)| e)
    }

    fn bind(&mut self, var: &str, expr: Expr) {
        for c in expr.columns() {
            self.predicates.insert(Predicate::NotNull(c.to_string()));
        }
        match self.output(var) {
            Some(prev) if *prev == expr => {}
            Some(prev) => {
                let same = Predicate::Same(prev.clone(), expr);
                self.predicates.insert(same);
            }
            None => self.outputs.push((var.to_string(), expr)),
        }
    }

    fn plan(&self) -> RelationalPlan {
        let scan = RelationalPlan::Scan {
            relation: self.relation.clone(),
        };
        let input = if self.predicates.is_empty() {
            scan
        } else {
            RelationalPlan::Select {
                input: Box::new(scan),
                predicates: self.predicates.iter().cloned().collect(),
            }
        };
        RelationalPlan::Project {
            input: Box::new(input),
            columns: self.outputs.clone(),
        }
    }

    fn constant_count(&self) -> usize {
        self.predicates
            .iter()
            .filter(|p| matches!(p, Predicate::Equals(..)))
            .count()
    }
}

/// Constrains a position to a constant; `false` when they can never agree.
fn constrain(atom: &mut Atom, template: &TermTemplate, value: &Term) -> bool {
    match (template, value) {
        (TermTemplate::Iri(t), Term::Iri(iri)) => {
            if t.is_constant() {
                return t.constant_text().as_deref() == Some(iri);
            }
            for c in t.columns() {
                atom.predicates.insert(Predicate::NotNull(c.to_string()));
            }
            if t.is_injective() {
                match t.invert(iri) {
                    Some(values) => {
                        for (c, v) in values {
                            atom.predicates.insert(Predicate::Equals(c, Term::literal(v)));
                        }
                    }
                    None => return false,
                }
            } else {
                atom.predicates
                    .insert(Predicate::Same(Expr::Iri(t.clone()), Expr::Const(value.clone())));
            }
            true
        }
        (TermTemplate::Column(c), Term::Literal(_)) => {
            atom.predicates.insert(Predicate::Equals(c.clone(), value.clone()));
            true
        }
        (TermTemplate::Literal(l), Term::Literal(v)) => l.as_str() == &**v,
        _ => false,
    }
}

fn match_pattern(pattern: &TriplePattern, mappings: &MappingSet) -> Vec<Atom> {
    let mut atoms = Vec::new();
    for assertion in &mappings.assertions {
        for t in assertion.target.iter().filter(|t| t.predicate == pattern.predicate) {
            let mut atom = Atom {
                relation: assertion.source.relation.clone(),
                predicates: assertion
                    .source
                    .conditions
                    .iter()
                    .map(|(c, v)| Predicate::Equals(c.clone(), Term::literal(v)))
                    .collect(),
                outputs: Vec::new(),
                subject: None,
            };
            let mut ok = true;
            for (pos, template) in [(&pattern.subject, &t.subject), (&pattern.object, &t.object)] {
                match pos {
                    PatternTerm::Const(c) => ok &= constrain(&mut atom, template, c),
                    PatternTerm::Var(v) => atom.bind(v, Expr::from_template(template)),
                }
            }
            if let (PatternTerm::Var(v), TermTemplate::Iri(tpl)) = (&pattern.subject, &t.subject) {
                if !tpl.is_constant() {
                    atom.subject = Some((v.clone(), tpl.clone()));
                }
            }
            if ok {
                atoms.push(atom);
            }
        }
    }
    atoms
}

fn render_pattern(p: &TriplePattern) -> String {
    let term = |t: &PatternTerm| match t {
        PatternTerm::Var(v) => format!("?{v}"),
        PatternTerm::Const(c) => c.to_string(),
    };
    format!("{} <{}> {}", term(&p.subject), p.predicate, term(&p.object))
}

fn pattern_plan(pattern: &TriplePattern, atoms: &[Atom], diagnostics: &mut Vec<String>) -> RelationalPlan {
    match atoms {
        [] => {
            diagnostics.push(format!("pattern {} matches no mapping", render_pattern(pattern)));
            RelationalPlan::Empty {
                columns: pattern.vars().map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect(),
            }
        }
        [one] => one.plan(),
        many => RelationalPlan::Union(many.iter().map(Atom::plan).collect()),
    }
}

fn join(left: Option<RelationalPlan>, right: RelationalPlan) -> RelationalPlan {
    match left {
        None => right,
        Some(left) => {
            let lc = left.output_columns();
            let keys = right
                .output_columns()
                .into_iter()
                .filter(|c| lc.contains(c))
                .collect();
            RelationalPlan::Join {
                left: Box::new(left),
                right: Box::new(right),
                keys,
            }
        }
    }
}

fn finish(query: &QueryAst, required: RelationalPlan, blocks: Vec<RelationalPlan>) -> RelationalPlan {
    let mut plan = required;
    for block in blocks {
        let lc = plan.output_columns();
        let keys = block
            .output_columns()
            .into_iter()
            .filter(|c| lc.contains(c))
            .collect();
        plan = RelationalPlan::LeftJoin {
            left: Box::new(plan),
            right: Box::new(block),
            keys,
        };
    }
    if !query.filters.is_empty() {
        plan = RelationalPlan::Select {
            input: Box::new(plan),
            predicates: query
                .filters
                .iter()
                .map(|(v, t)| Predicate::Equals(v.clone(), t.clone()))
                .collect(),
        };
    }
    RelationalPlan::Project {
        input: Box::new(plan),
        columns: query
            .select_vars
            .iter()
            .map(|v| (v.clone(), Expr::Column(v.clone())))
            .collect(),
    }
}

fn empty_group() -> RelationalPlan {
    RelationalPlan::Empty { columns: Vec::new() }
}

/// Direct translation: one scan per pattern/template match, joined in
/// query order.
pub fn unfold(query: &QueryAst, mappings: &MappingSet) -> UnfoldedQuery {
    let mut diagnostics = Vec::new();
    let group = |patterns: &[TriplePattern], diagnostics: &mut Vec<String>| {
        let mut acc = None;
        for p in patterns {
            let atoms = match_pattern(p, mappings);
            acc = Some(join(acc, pattern_plan(p, &atoms, diagnostics)));
        }
        acc.unwrap_or_else(empty_group)
    };
    let required = group(&query.required, &mut diagnostics);
    let blocks = query
        .optional_blocks
        .iter()
        .map(|b| group(b, &mut diagnostics))
        .collect();
    UnfoldedQuery {
        plan: finish(query, required, blocks),
        diagnostics,
    }
}

/// Drops template matches that can never join with the other patterns
/// binding the same variable. `outer` holds expressions already fixed by
/// an enclosing group.
fn prune(branches: &mut [Vec<Atom>], patterns: &[TriplePattern], outer: &BTreeMap<String, Vec<Expr>>) {
    loop {
        let mut changed = false;
        for i in 0..branches.len() {
            let vars: Vec<String> = patterns[i].vars().map(str::to_string).collect();
            let before = branches[i].len();
            let others: Vec<(String, Vec<Expr>)> = vars
                .iter()
                .flat_map(|v| {
                    let mut sets = Vec::new();
                    for (j, p) in patterns.iter().enumerate() {
                        if j != i && p.vars().any(|x| x == v) {
                            sets.push((v.clone(), branches[j].iter().filter_map(|a| a.output(v).cloned()).collect()));
                        }
                    }
                    if let Some(exprs) = outer.get(v) {
                        sets.push((v.clone(), exprs.clone()));
                    }
                    sets
                })
                .collect();
            branches[i].retain(|atom| {
                others.iter().all(|(v, exprs)| match atom.output(v) {
                    Some(e) => exprs.iter().any(|o| e.compatible(o)),
                    None => true,
                })
            });
            changed |= branches[i].len() != before;
        }
        if !changed {
            return;
        }
    }
}

fn mergeable(atom: &Atom, store: &Store) -> Option<(String, IriTemplate, String)> {
    let (var, template) = atom.subject.as_ref()?;
    if !template.is_injective() {
        return None;
    }
    let relation = store.relation(&atom.relation).ok()?;
    let columns: BTreeSet<&str> = template.columns().collect();
    let covered = relation
        .keys()
        .iter()
        .any(|key| key.iter().all(|k| columns.contains(k.as_str())));
    covered.then(|| (var.clone(), template.clone(), store.base_of(&atom.relation).to_string()))
}

fn merge_into(target: &mut Atom, other: &Atom) {
    target.predicates.extend(other.predicates.iter().cloned());
    for (v, e) in &other.outputs {
        target.bind(v, e.clone());
    }
}

/// Greedy join order: most constants first, then the atom sharing the most
/// variables with what is already joined.
fn order(mut plans: Vec<(RelationalPlan, usize)>) -> Option<RelationalPlan> {
    let mut acc: Option<RelationalPlan> = None;
    let mut bound: BTreeSet<String> = BTreeSet::new();
    while !plans.is_empty() {
        let best = (0..plans.len())
            .max_by_key(|&i| {
                let cols = plans[i].0.output_columns();
                let shared = cols.iter().filter(|c| bound.contains(*c)).count();
                let connected = acc.is_none() || shared > 0;
                (connected, shared, plans[i].1, std::cmp::Reverse(i))
            })
            .expect("nonempty");
        let (plan, _) = plans.remove(best);
        bound.extend(plan.output_columns());
        acc = Some(join(acc, plan));
    }
    acc
}

fn optimized_group(
    patterns: &[TriplePattern],
    mappings: &MappingSet,
    store: &Store,
    outer: &BTreeMap<String, Vec<Expr>>,
    diagnostics: &mut Vec<String>,
) -> (RelationalPlan, BTreeMap<String, Vec<Expr>>) {
    let mut branches: Vec<Vec<Atom>> = patterns.iter().map(|p| match_pattern(p, mappings)).collect();
    prune(&mut branches, patterns, outer);

    let mut merged: Vec<(Atom, (String, IriTemplate, String))> = Vec::new();
    let mut rest: Vec<(usize, Vec<Atom>)> = Vec::new();
    for (i, atoms) in branches.into_iter().enumerate() {
        if let [atom] = atoms.as_slice() {
            if let Some(key) = mergeable(atom, store) {
                let lens = |a: &Atom| (a.relation != key.2).then(|| a.relation.clone());
                let slot = merged.iter_mut().find(|(m, k)| {
                    *k == key && (lens(m).is_none() || lens(atom).is_none() || lens(m) == lens(atom))
                });
                match slot {
                    Some((m, _)) => {
                        if lens(atom).is_some() {
                            m.relation = atom.relation.clone();
                        }
                        merge_into(m, atom);
                    }
                    None => merged.push((atom.clone(), key)),
                }
                continue;
            }
        }
        rest.push((i, atoms));
    }

    let mut exprs: BTreeMap<String, Vec<Expr>> = BTreeMap::new();
    let mut plans = Vec::new();
    for (atom, _) in &merged {
        for (v, e) in &atom.outputs {
            exprs.entry(v.clone()).or_default().push(e.clone());
        }
        plans.push((atom.plan(), atom.constant_count()));
    }
    for (i, atoms) in &rest {
        for atom in atoms {
            for (v, e) in &atom.outputs {
                exprs.entry(v.clone()).or_default().push(e.clone());
            }
        }
        let constants = atoms.iter().map(Atom::constant_count).min().unwrap_or(0);
        plans.push((pattern_plan(&patterns[*i], atoms, diagnostics), constants));
    }
    (order(plans).unwrap_or_else(empty_group), exprs)
}

/// Translation with template pruning, merging of patterns that read the
/// same keyed row, and a selectivity-driven join order.
pub fn unfold_optimized(query: &QueryAst, mappings: &MappingSet, store: &Store) -> UnfoldedQuery {
    let mut diagnostics = Vec::new();
    let (required, outer) = optimized_group(&query.required, mappings, store, &BTreeMap::new(), &mut diagnostics);
    let required_vars = pattern_vars(&query.required);
    let outer: BTreeMap<String, Vec<Expr>> = outer.into_iter().filter(|(v, _)| required_vars.contains(v)).collect();
    let blocks = query
        .optional_blocks
        .iter()
        .map(|b| optimized_group(b, mappings, store, &outer, &mut diagnostics).0)
        .collect();
    UnfoldedQuery {
        plan: finish(query, required, blocks),
        diagnostics,
    }
}
