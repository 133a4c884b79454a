use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::cursor::{is_name_char, Cursor};
use super::term::{escape_literal, Term, RDF_TYPE};
use super::VkgError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    Var(String),
    Const(Term),
}

impl PatternTerm {
    pub fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Const(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            PatternTerm::Var(v) => format!("?{v}"),
            PatternTerm::Const(t) => t.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: String,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.subject.var().into_iter().chain(self.object.var())
    }
}

/// A basic graph pattern with at most one level of OPTIONAL blocks and
/// equality filters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryAst {
    pub prefixes: BTreeMap<String, String>,
    pub select_vars: Vec<String>,
    pub required: Vec<TriplePattern>,
    pub optional_blocks: Vec<Vec<TriplePattern>>,
    pub filters: Vec<(String, Term)>,
}

pub(crate) fn pattern_vars(patterns: &[TriplePattern]) -> BTreeSet<String> {
    patterns.iter().flat_map(|p| p.vars().map(str::to_string)).collect()
}

impl QueryAst {
    pub fn required_vars(&self) -> BTreeSet<String> {
        pattern_vars(&self.required)
    }

    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut vars = self.required_vars();
        for b in &self.optional_blocks {
            vars.extend(pattern_vars(b));
        }
        vars
    }

    pub fn to_sparql(&self) -> String {
        let mut out = String::new();
        for (p, iri) in &self.prefixes {
            let _ = writeln!(out, "PREFIX {p}: <{iri}>");
        }
        let vars: Vec<String> = self.select_vars.iter().map(|v| format!("?{v}")).collect();
        let _ = writeln!(out, "SELECT {}\nWHERE {{", vars.join(" "));
        let pattern = |p: &TriplePattern| {
            let pred = if p.predicate == RDF_TYPE {
                "a".to_string()
            } else {
                format!("<{}>", p.predicate)
            };
            format!("{} {pred} {} .", p.subject.render(), p.object.render())
        };
        for p in &self.required {
            let _ = writeln!(out, "  {}", pattern(p));
        }
        for block in &self.optional_blocks {
            out.push_str("  OPTIONAL {\n");
            for p in block {
                let _ = writeln!(out, "    {}", pattern(p));
            }
            out.push_str("  }\n");
        }
        for (v, t) in &self.filters {
            let _ = writeln!(out, "  FILTER(?{v} = {t})");
        }
        out.push_str("}\n");
        out
    }

    fn check(&self) -> Result<(), VkgError> {
        let vars = self.all_vars();
        for v in self.select_vars.iter().chain(self.filters.iter().map(|(v, _)| v)) {
            if !vars.contains(v) {
                return Err(VkgError::UnknownVariable(v.clone()));
            }
        }
        let required = self.required_vars();
        let mut seen_optional: BTreeSet<String> = BTreeSet::new();
        for block in &self.optional_blocks {
            let block_vars = pattern_vars(block);
            if let Some(v) = block_vars.iter().find(|v| !required.contains(*v) && seen_optional.contains(*v)) {
                return Err(VkgError::Unsupported {
                    feature: format!("variable ?{v} shared by OPTIONAL blocks but not bound outside them"),
                    line: 0,
                    column: 0,
                });
            }
            seen_optional.extend(block_vars);
        }
        Ok(())
    }
}

/// Query text with `{name}` placeholders filled in as escaped literal
/// content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    text: String,
}

impl QueryTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn bind(&self, bindings: &[(&str, &str)]) -> String {
        let mut text = self.text.clone();
        for (name, value) in bindings {
            text = text.replace(&format!("{{{name}}}"), &escape_literal(value));
        }
        text
    }

    pub fn instantiate(&self, bindings: &[(&str, &str)]) -> Result<QueryAst, VkgError> {
        parse_query(&self.bind(bindings))
    }
}

const UNSUPPORTED_KEYWORDS: [&str; 14] = [
    "UNION", "MINUS", "BIND", "VALUES", "GRAPH", "SERVICE", "SELECT", "ORDER", "LIMIT", "OFFSET", "GROUP", "HAVING",
    "CONSTRUCT", "ASK",
];

struct Parser<'a> {
    cur: Cursor<'a>,
    ast: QueryAst,
}

pub fn parse_query(text: &str) -> Result<QueryAst, VkgError> {
    let mut p = Parser {
        cur: Cursor::new(text),
        ast: QueryAst::default(),
    };
    p.query()?;
    p.ast.check()?;
    Ok(p.ast)
}

impl<'a> Parser<'a> {
    fn unsupported(&self, feature: impl Into<String>) -> VkgError {
        let (line, column) = self.cur.location();
        VkgError::Unsupported {
            feature: feature.into(),
            line,
            column,
        }
    }

    fn unsupported_keyword(&self) -> Option<VkgError> {
        UNSUPPORTED_KEYWORDS
            .iter()
            .chain(["DISTINCT", "REDUCED", "BASE", "DESCRIBE"].iter())
            .find(|kw| self.cur.starts_with_keyword(kw))
            .map(|kw| self.unsupported(kw.to_string()))
    }

    fn query(&mut self) -> Result<(), VkgError> {
        loop {
            self.cur.skip_ws();
            if self.cur.eat_keyword("PREFIX") {
                self.cur.skip_ws();
                let name = self.cur.take_while(is_name_char).to_string();
                self.cur.expect_char(':')?;
                self.cur.skip_ws();
                let iri = self.cur.iri_ref()?.to_string();
                self.ast.prefixes.insert(name, iri);
            } else {
                break;
            }
        }
        if !self.cur.eat_keyword("SELECT") {
            return Err(self.unsupported_keyword().unwrap_or_else(|| self.cur.error("`PREFIX` or `SELECT`")));
        }
        loop {
            self.cur.skip_ws();
            match self.cur.peek() {
                Some('?' | '$') => {
                    let v = self.variable()?;
                    if !self.ast.select_vars.contains(&v) {
                        self.ast.select_vars.push(v);
                    }
                }
                Some('*') => return Err(self.unsupported("SELECT *")),
                Some('(') => return Err(self.unsupported("SELECT expression")),
                _ => {
                    if let Some(e) = self.unsupported_keyword() {
                        return Err(e);
                    }
                    break;
                }
            }
        }
        if self.ast.select_vars.is_empty() {
            return Err(self.cur.error("variable"));
        }
        self.cur.eat_keyword("WHERE");
        self.cur.skip_ws();
        self.cur.expect_char('{')?;
        self.group(true)?;
        self.cur.skip_ws();
        if !self.cur.at_end() {
            return Err(self.unsupported_keyword().unwrap_or_else(|| self.cur.error("end of query")));
        }
        Ok(())
    }

    fn variable(&mut self) -> Result<String, VkgError> {
        if !(self.cur.eat_char('?') || self.cur.eat_char('$')) {
            return Err(self.cur.error("variable"));
        }
        let name = self.cur.take_while(|c| c.is_alphanumeric() || c == '_');
        if name.is_empty() {
            return Err(self.cur.error("variable name"));
        }
        Ok(name.to_string())
    }

    /// Parses patterns up to and including the closing `}`.
    fn group(&mut self, top: bool) -> Result<(), VkgError> {
        let mut block = Vec::new();
        loop {
            self.cur.skip_ws();
            if self.cur.eat_char('}') {
                break;
            }
            if self.cur.at_end() {
                return Err(self.cur.error("`}`"));
            }
            if self.cur.starts_with_keyword("OPTIONAL") {
                if !top {
                    return Err(self.unsupported("nested OPTIONAL"));
                }
                self.cur.eat_keyword("OPTIONAL");
                self.cur.skip_ws();
                self.cur.expect_char('{')?;
                self.group(false)?;
                continue;
            }
            if self.cur.starts_with_keyword("FILTER") {
                if !top {
                    return Err(self.unsupported("FILTER inside OPTIONAL"));
                }
                self.cur.eat_keyword("FILTER");
                self.filter()?;
                continue;
            }
            if let Some(e) = self.unsupported_keyword() {
                return Err(e);
            }
            if self.cur.peek() == Some('{') {
                return Err(self.unsupported("nested group pattern"));
            }
            self.triples(&mut block)?;
        }
        if top {
            if block.is_empty() {
                return Err(self.unsupported("query without required triple patterns"));
            }
            self.ast.required = block;
        } else if block.is_empty() {
            return Err(self.cur.error("triple pattern in OPTIONAL"));
        } else {
            self.ast.optional_blocks.push(block);
        }
        Ok(())
    }

    fn filter(&mut self) -> Result<(), VkgError> {
        self.cur.skip_ws();
        if !self.cur.eat_char('(') {
            let name = self.cur.take_while(|c| c.is_alphanumeric() || c == '_');
            return Err(self.unsupported(format!("FILTER {}", if name.is_empty() { "expression" } else { name })));
        }
        self.cur.skip_ws();
        let (var, term) = if matches!(self.cur.peek(), Some('?' | '$')) {
            let v = self.variable()?;
            self.filter_eq()?;
            (v, self.constant()?)
        } else {
            let t = self.constant()?;
            self.filter_eq()?;
            (self.variable()?, t)
        };
        self.cur.skip_ws();
        if !self.cur.eat_char(')') {
            return Err(self.unsupported("FILTER expression beyond a single equality"));
        }
        self.ast.filters.push((var, term));
        Ok(())
    }

    fn filter_eq(&mut self) -> Result<(), VkgError> {
        self.cur.skip_ws();
        if self.cur.rest().starts_with("==") || !self.cur.eat_char('=') {
            return Err(self.unsupported("FILTER operator other than ="));
        }
        self.cur.skip_ws();
        Ok(())
    }

    fn constant(&mut self) -> Result<Term, VkgError> {
        match self.term()? {
            PatternTerm::Const(t) => Ok(t),
            PatternTerm::Var(_) => Err(self.unsupported("FILTER comparing two variables")),
        }
    }

    fn triples(&mut self, out: &mut Vec<TriplePattern>) -> Result<(), VkgError> {
        let subject = self.term()?;
        if matches!(subject, PatternTerm::Const(Term::Literal(_))) {
            return Err(self.cur.error("variable or IRI subject"));
        }
        loop {
            self.cur.skip_ws();
            let predicate = self.predicate()?;
            loop {
                self.cur.skip_ws();
                let object = self.term()?;
                out.push(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                self.cur.skip_ws();
                if !self.cur.eat_char(',') {
                    break;
                }
            }
            self.cur.skip_ws();
            if self.cur.eat_char('.') || self.cur.peek() == Some('}') {
                return Ok(());
            }
            if !self.cur.eat_char(';') {
                if self.cur.starts_with_keyword("OPTIONAL") || self.cur.starts_with_keyword("FILTER") {
                    return Ok(());
                }
                return Err(self.cur.error("`;`, `,`, `.` or `}`"));
            }
            self.cur.skip_ws();
            if self.cur.eat_char('.') || self.cur.peek() == Some('}') {
                return Ok(());
            }
        }
    }

    fn predicate(&mut self) -> Result<String, VkgError> {
        let iri = if self.cur.starts_with_keyword("a") && !self.cur.rest()[1..].starts_with(':') {
            self.cur.advance(1);
            RDF_TYPE.to_string()
        } else {
            match self.cur.peek() {
                Some('?' | '$') => return Err(self.unsupported("variable predicate")),
                Some('^' | '!' | '(') => return Err(self.unsupported("property path")),
                _ => {}
            }
            match self.term()? {
                PatternTerm::Const(Term::Iri(i)) => i.to_string(),
                _ => return Err(self.cur.error("IRI predicate")),
            }
        };
        if matches!(self.cur.peek(), Some('/' | '|' | '*' | '+')) {
            return Err(self.unsupported("property path"));
        }
        Ok(iri)
    }

    fn term(&mut self) -> Result<PatternTerm, VkgError> {
        self.cur.skip_ws();
        let (line, column) = self.cur.location();
        match self.cur.peek() {
            Some('?' | '$') => Ok(PatternTerm::Var(self.variable()?)),
            Some('<') => Ok(PatternTerm::Const(Term::iri(self.cur.iri_ref()?))),
            Some('"' | '\'') => {
                let s = self.cur.string_literal()?;
                if matches!(self.cur.peek(), Some('@' | '^')) {
                    return Err(self.unsupported("typed or language-tagged literal"));
                }
                Ok(PatternTerm::Const(Term::literal(s)))
            }
            Some('[') => Err(self.unsupported("blank node")),
            Some('(') => Err(self.unsupported("collection")),
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' => Err(self.unsupported("numeric literal")),
            Some(c) if is_name_char(c) || c == ':' => {
                if self.cur.starts_with_keyword("true") || self.cur.starts_with_keyword("false") {
                    return Err(self.unsupported("boolean literal"));
                }
                let prefix = self.cur.take_while(is_name_char).to_string();
                if !self.cur.eat_char(':') {
                    return Err(VkgError::Syntax {
                        line,
                        column,
                        expected: "term".into(),
                        found: format!("`{prefix}`"),
                    });
                }
                let local = self.cur.take_while(|c| is_name_char(c));
                let base = self.ast.prefixes.get(&prefix).ok_or_else(|| VkgError::UnknownPrefix {
                    prefix: prefix.clone(),
                    line,
                    column,
                })?;
                Ok(PatternTerm::Const(Term::iri(format!("{base}{local}"))))
            }
            _ => Err(self.cur.error("term")),
        }
    }
}
