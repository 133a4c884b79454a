use std::collections::HashMap;

use super::eval::ResultTable;
use super::mapping::{MappingSet, TermTemplate};
use super::query::{PatternTerm, QueryAst, TriplePattern};
use super::store::Store;
use super::term::Term;
use super::VkgError;

pub type Triple = (Term, Term, Term);

/// A bag of triples with lookup indexes.
#[derive(Debug, Clone, Default)]
pub struct TripleSet {
    triples: Vec<Triple>,
    by_predicate: HashMap<Term, Vec<usize>>,
    by_subject: HashMap<(Term, Term), Vec<usize>>,
    by_object: HashMap<(Term, Term), Vec<usize>>,
}

impl TripleSet {
    pub fn new(triples: Vec<Triple>) -> Self {
        let mut set = Self::default();
        for (i, (s, p, o)) in triples.iter().enumerate() {
            set.by_predicate.entry(p.clone()).or_default().push(i);
            set.by_subject.entry((p.clone(), s.clone())).or_default().push(i);
            set.by_object.entry((p.clone(), o.clone())).or_default().push(i);
        }
        set.triples = triples;
        set
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// N-Triples-like dump, one triple per line.
    pub fn to_ntriples(&self) -> String {
        self.triples.iter().map(|(s, p, o)| format!("{s} {p} {o} .\n")).collect()
    }
}

fn instantiate(t: &TermTemplate, value: &dyn Fn(&str) -> Option<String>) -> Option<Term> {
    match t {
        TermTemplate::Iri(tpl) => tpl.render_with(value).map(Term::iri),
        TermTemplate::Column(c) => value(c).map(Term::literal),
        TermTemplate::Literal(l) => Some(Term::literal(l)),
    }
}

/// Instantiates every target template over every source row. Triples with
/// a null placeholder are skipped.
pub fn materialize_triples(mappings: &MappingSet, store: &Store) -> Result<TripleSet, VkgError> {
    let mut out = Vec::new();
    for a in &mappings.assertions {
        let table = store.relation(&a.source.relation)?;
        let conditions = a
            .source
            .conditions
            .iter()
            .map(|(c, v)| table.column_position(c).map(|p| (p, v.as_str())))
            .collect::<Result<Vec<_>, _>>()?;
        for c in &a.source.columns {
            table.column_position(c)?;
        }
        for row in table.rows() {
            if !conditions.iter().all(|(p, v)| row[*p].as_deref() == Some(*v)) {
                continue;
            }
            let value = |c: &str| -> Option<String> {
                let p = table.position(c)?;
                row[p].as_deref().map(str::to_string)
            };
            for t in &a.target {
                let s = instantiate(&t.subject, &value);
                let o = instantiate(&t.object, &value);
                if let (Some(s), Some(o)) = (s, o) {
                    out.push((s, Term::iri(&t.predicate), o));
                }
            }
        }
    }
    Ok(TripleSet::new(out))
}

type Binding = HashMap<String, Term>;

fn resolve<'a>(t: &'a PatternTerm, b: &'a Binding) -> Option<&'a Term> {
    match t {
        PatternTerm::Const(c) => Some(c),
        PatternTerm::Var(v) => b.get(v),
    }
}

fn unify(t: &PatternTerm, value: &Term, b: &mut Binding) -> bool {
    match t {
        PatternTerm::Const(c) => c == value,
        PatternTerm::Var(v) => match b.get(v) {
            Some(x) => x == value,
            None => {
                b.insert(v.clone(), value.clone());
                true
            }
        },
    }
}

fn solve(patterns: &[TriplePattern], triples: &TripleSet, binding: Binding, out: &mut Vec<Binding>) {
    if patterns.is_empty() {
        out.push(binding);
        return;
    }
    let bound = |p: &TriplePattern| {
        usize::from(resolve(&p.subject, &binding).is_some()) + usize::from(resolve(&p.object, &binding).is_some())
    };
    let next = (0..patterns.len())
        .max_by_key(|&i| (bound(&patterns[i]), std::cmp::Reverse(i)))
        .expect("nonempty");
    let p = &patterns[next];
    let rest: Vec<TriplePattern> = patterns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != next)
        .map(|(_, p)| p.clone())
        .collect();
    let pred = Term::iri(&p.predicate);
    let candidates = if let Some(s) = resolve(&p.subject, &binding) {
        triples.by_subject.get(&(pred, s.clone()))
    } else if let Some(o) = resolve(&p.object, &binding) {
        triples.by_object.get(&(pred, o.clone()))
    } else {
        triples.by_predicate.get(&pred)
    };
    for &i in candidates.map(Vec::as_slice).unwrap_or_default() {
        let (s, _, o) = &triples.triples[i];
        let mut b = binding.clone();
        if unify(&p.subject, s, &mut b) && unify(&p.object, o, &mut b) {
            solve(&rest, triples, b, out);
        }
    }
}

/// Backtracking evaluation over materialized triples; OPTIONAL blocks
/// extend each solution when they can and leave it unchanged otherwise.
pub fn naive_match(query: &QueryAst, triples: &TripleSet) -> ResultTable {
    let mut solutions = Vec::new();
    solve(&query.required, triples, Binding::new(), &mut solutions);
    for block in &query.optional_blocks {
        let mut next = Vec::new();
        for s in solutions {
            let mut ext = Vec::new();
            solve(block, triples, s.clone(), &mut ext);
            if ext.is_empty() {
                next.push(s);
            } else {
                next.extend(ext);
            }
        }
        solutions = next;
    }
    solutions.retain(|b| query.filters.iter().all(|(v, t)| b.get(v) == Some(t)));
    let rows = solutions
        .into_iter()
        .map(|b| query.select_vars.iter().map(|v| b.get(v).cloned()).collect())
        .collect();
    ResultTable::new(query.select_vars.clone(), rows)
}
