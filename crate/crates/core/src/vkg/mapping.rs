use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::cursor::{is_name_char, Cursor};
use super::term::{escape_literal, IriTemplate, RDF_TYPE};
use super::VkgError;

/// One position of a target triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermTemplate {
    Iri(IriTemplate),
    /// `{column}`: a plain literal holding the column value.
    Column(String),
    Literal(String),
}

impl TermTemplate {
    pub fn columns(&self) -> Vec<&str> {
        match self {
            TermTemplate::Iri(t) => t.columns().collect(),
            TermTemplate::Column(c) => vec![c.as_str()],
            TermTemplate::Literal(_) => Vec::new(),
        }
    }

    fn render(&self) -> String {
        match self {
            TermTemplate::Iri(t) => format!("<{t}>"),
            TermTemplate::Column(c) => format!("{{{c}}}"),
            TermTemplate::Literal(l) => format!("\"{}\"", escape_literal(l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TripleTemplate {
    pub subject: TermTemplate,
    pub predicate: String,
    pub object: TermTemplate,
}

/// `SELECT columns FROM relation [WHERE column = 'value' AND ...]`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceQuery {
    pub columns: Vec<String>,
    pub relation: String,
    pub conditions: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MappingAssertion {
    pub id: String,
    pub target: Vec<TripleTemplate>,
    pub source: SourceQuery,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingSet {
    pub prefixes: BTreeMap<String, String>,
    pub assertions: Vec<MappingAssertion>,
}

impl MappingSet {
    pub fn is_empty(&self) -> bool {
        self.assertions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assertions.len()
    }

    pub fn get(&self, id: &str) -> Option<&MappingAssertion> {
        self.assertions.iter().find(|a| a.id == id)
    }

    /// Appends the assertions of `other`; prefixes are merged.
    pub fn extend(&mut self, other: MappingSet) -> Result<(), VkgError> {
        for a in &other.assertions {
            if self.get(&a.id).is_some() {
                return Err(VkgError::DuplicateMapping(a.id.clone()));
            }
        }
        self.prefixes.extend(other.prefixes);
        self.assertions.extend(other.assertions);
        Ok(())
    }

    /// Renders the set in the mapping file syntax with full IRIs.
    pub fn to_obda(&self) -> String {
        let mut out = String::new();
        for (p, iri) in &self.prefixes {
            let _ = writeln!(out, "@prefix {p}: <{iri}> .");
        }
        for a in &self.assertions {
            out.push('\n');
            let _ = writeln!(out, "mappingId {}", a.id);
            out.push_str("target");
            let mut prev: Option<&TermTemplate> = None;
            for t in &a.target {
                let pred = if t.predicate == RDF_TYPE {
                    "a".to_string()
                } else {
                    format!("<{}>", t.predicate)
                };
                if prev == Some(&t.subject) {
                    let _ = write!(out, " ;\n    {pred} {}", t.object.render());
                } else {
                    if prev.is_some() {
                        out.push_str(" .\n      ");
                    }
                    let _ = write!(out, " {} {pred} {}", t.subject.render(), t.object.render());
                }
                prev = Some(&t.subject);
            }
            out.push_str(" .\n");
            let _ = write!(out, "source SELECT {} FROM {}", a.source.columns.join(", "), a.source.relation);
            for (i, (c, v)) in a.source.conditions.iter().enumerate() {
                let kw = if i == 0 { "WHERE" } else { "AND" };
                let _ = write!(out, " {kw} {c} = '{}'", v.replace('\\', "\\\\").replace('\'', "\\'"));
            }
            out.push('\n');
        }
        out
    }
}

struct Placeholder {
    name: String,
    line: usize,
    column: usize,
}

struct Parser<'a> {
    cur: Cursor<'a>,
    prefixes: BTreeMap<String, String>,
}

pub fn parse_mappings(text: &str) -> Result<MappingSet, VkgError> {
    let mut p = Parser {
        cur: Cursor::new(text),
        prefixes: BTreeMap::new(),
    };
    let mut assertions: Vec<MappingAssertion> = Vec::new();
    let mut ids = BTreeSet::new();
    loop {
        p.cur.skip_ws();
        if p.cur.at_end() {
            break;
        }
        if p.cur.eat_keyword("@prefix") {
            p.prefix_decl()?;
        } else if p.cur.eat_keyword("mappingId") {
            let a = p.assertion()?;
            if !ids.insert(a.id.clone()) {
                return Err(VkgError::DuplicateMapping(a.id));
            }
            assertions.push(a);
        } else {
            return Err(p.cur.error("`@prefix` or `mappingId`"));
        }
    }
    Ok(MappingSet {
        prefixes: p.prefixes,
        assertions,
    })
}

impl<'a> Parser<'a> {
    fn prefix_decl(&mut self) -> Result<(), VkgError> {
        self.cur.skip_ws();
        let name = self.cur.take_while(is_name_char).to_string();
        self.cur.expect_char(':')?;
        self.cur.skip_ws();
        let iri = self.cur.iri_ref()?.to_string();
        self.cur.skip_ws();
        self.cur.expect_char('.')?;
        self.prefixes.insert(name, iri);
        Ok(())
    }

    fn assertion(&mut self) -> Result<MappingAssertion, VkgError> {
        self.cur.skip_ws();
        let id = self
            .cur
            .take_while(|c| !c.is_whitespace())
            .to_string();
        if id.is_empty() {
            return Err(self.cur.error("mapping identifier"));
        }
        self.cur.skip_ws();
        if !self.cur.eat_keyword("target") {
            return Err(self.cur.error("`target`"));
        }
        let mut placeholders = Vec::new();
        let mut target = Vec::new();
        loop {
            self.cur.skip_ws();
            if self.cur.starts_with_keyword("source") {
                break;
            }
            self.statement(&mut target, &mut placeholders)?;
        }
        if target.is_empty() {
            return Err(self.cur.error("at least one target triple"));
        }
        self.cur.eat_keyword("source");
        let source = self.source()?;
        for p in placeholders {
            if !source.columns.contains(&p.name) {
                return Err(VkgError::DanglingPlaceholder {
                    name: p.name,
                    mapping: id,
                    line: p.line,
                    column: p.column,
                });
            }
        }
        Ok(MappingAssertion { id, target, source })
    }

    fn statement(&mut self, out: &mut Vec<TripleTemplate>, ph: &mut Vec<Placeholder>) -> Result<(), VkgError> {
        let subject = self.term(ph, false)?;
        if matches!(subject, TermTemplate::Literal(_) | TermTemplate::Column(_)) {
            return Err(self.cur.error("IRI subject"));
        }
        loop {
            self.cur.skip_ws();
            let predicate = self.predicate()?;
            loop {
                self.cur.skip_ws();
                let object = self.term(ph, true)?;
                out.push(TripleTemplate {
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
            if self.cur.eat_char('.') {
                return Ok(());
            }
            if !self.cur.eat_char(';') {
                return Err(self.cur.error("`;`, `,` or `.`"));
            }
            self.cur.skip_ws();
            if self.cur.eat_char('.') {
                return Ok(());
            }
        }
    }

    fn predicate(&mut self) -> Result<String, VkgError> {
        if self.cur.starts_with_keyword("a") && !self.cur.rest()[1..].starts_with(':') {
            self.cur.advance(1);
            return Ok(RDF_TYPE.to_string());
        }
        let (line, column) = self.cur.location();
        match self.term(&mut Vec::new(), false)? {
            TermTemplate::Iri(t) if t.is_constant() => Ok(t.constant_text().unwrap_or_default()),
            _ => Err(VkgError::Syntax {
                line,
                column,
                expected: "constant IRI predicate".into(),
                found: "template or literal".into(),
            }),
        }
    }

    fn term(&mut self, ph: &mut Vec<Placeholder>, allow_literal: bool) -> Result<TermTemplate, VkgError> {
        self.cur.skip_ws();
        let (line, column) = self.cur.location();
        let term = match self.cur.peek() {
            Some('<') => {
                let body = self.cur.iri_ref()?;
                TermTemplate::Iri(IriTemplate::parse(body).map_err(|e| VkgError::Syntax {
                    line,
                    column,
                    expected: "IRI template".into(),
                    found: e,
                })?)
            }
            Some('"' | '\'') if allow_literal => TermTemplate::Literal(self.cur.string_literal()?),
            Some('{') if allow_literal => {
                self.cur.bump();
                let name = self.cur.take_while(|c| c.is_alphanumeric() || c == '_').to_string();
                if name.is_empty() {
                    return Err(self.cur.error("column name"));
                }
                self.cur.expect_char('}')?;
                if matches!(self.cur.peek(), Some('^' | '@')) {
                    let (line, column) = self.cur.location();
                    return Err(VkgError::Unsupported {
                        feature: "typed or language-tagged literal".into(),
                        line,
                        column,
                    });
                }
                TermTemplate::Column(name)
            }
            Some(c) if is_name_char(c) || c == ':' => {
                let prefix = self.cur.take_while(is_name_char).to_string();
                if !self.cur.eat_char(':') {
                    return Err(self.cur.error("prefixed name"));
                }
                let local = self
                    .cur
                    .take_while(|c| is_name_char(c) || matches!(c, '{' | '}' | '/' | '%' | '~' | '#'));
                let base = self.prefixes.get(&prefix).ok_or_else(|| VkgError::UnknownPrefix {
                    prefix: prefix.clone(),
                    line,
                    column,
                })?;
                TermTemplate::Iri(IriTemplate::parse(&format!("{base}{local}")).map_err(|e| VkgError::Syntax {
                    line,
                    column,
                    expected: "IRI template".into(),
                    found: e,
                })?)
            }
            _ => return Err(self.cur.error("IRI, template or literal")),
        };
        for name in term.columns() {
            ph.push(Placeholder {
                name: name.to_string(),
                line,
                column,
            });
        }
        Ok(term)
    }

    fn identifier(&mut self, dotted: bool) -> Result<String, VkgError> {
        self.cur.skip_ws();
        let mut name = String::new();
        loop {
            if self.cur.eat_char('`') {
                let part = self.cur.take_while(|c| c != '`' && c != '\n').to_string();
                self.cur.expect_char('`')?;
                name.push_str(&part);
            } else {
                let part = self.cur.take_while(is_name_char);
                if part.is_empty() {
                    return Err(self.cur.error("identifier"));
                }
                name.push_str(part);
            }
            if dotted && self.cur.eat_char('.') {
                name.push('.');
            } else {
                return Ok(name);
            }
        }
    }

    fn source(&mut self) -> Result<SourceQuery, VkgError> {
        self.cur.skip_ws();
        if !self.cur.eat_keyword("SELECT") {
            return Err(self.cur.error("`SELECT`"));
        }
        self.cur.skip_ws();
        if self.cur.peek() == Some('*') {
            let (line, column) = self.cur.location();
            return Err(VkgError::Unsupported {
                feature: "SELECT *".into(),
                line,
                column,
            });
        }
        let mut columns = Vec::new();
        loop {
            columns.push(self.identifier(false)?);
            self.cur.skip_ws();
            if !self.cur.eat_char(',') {
                break;
            }
        }
        self.cur.skip_ws();
        if !self.cur.eat_keyword("FROM") {
            return Err(self.cur.error("`,` or `FROM`"));
        }
        let relation = self.identifier(true)?;
        let mut conditions = Vec::new();
        self.cur.skip_ws();
        if self.cur.eat_keyword("WHERE") {
            loop {
                let column = self.identifier(false)?;
                self.cur.skip_ws();
                self.cur.expect_char('=')?;
                self.cur.skip_ws();
                conditions.push((column, self.cur.string_literal()?));
                self.cur.skip_ws();
                if !self.cur.eat_keyword("AND") {
                    break;
                }
            }
        }
        self.cur.skip_ws();
        self.cur.eat_char(';');
        self.cur.skip_ws();
        if !(self.cur.at_end() || self.cur.starts_with_keyword("mappingId") || self.cur.starts_with_keyword("@prefix")) {
            return Err(self.cur.error("`WHERE`, `mappingId` or end of input"));
        }
        Ok(SourceQuery {
            columns,
            relation,
            conditions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = "@prefix : <http://tasi.com/> .
@prefix tasi: <http://tasi.com#> .

mappingId Qualification_Manufacturer
target :q_{number} tasi:manufacturerName {canonical_manufacturer_name}.
source SELECT number, canonical_manufacturer_name
       FROM lenses.qualification_manufacturer
";

    #[test]
    fn manufacturer_lens_mapping() {
        let m = parse_mappings(LISTING).unwrap();
        assert_eq!(m.len(), 1);
        let a = &m.assertions[0];
        assert_eq!(a.id, "Qualification_Manufacturer");
        assert_eq!(
            a.target[0].subject,
            TermTemplate::Iri(IriTemplate::parse("http://tasi.com/q_{number}").unwrap())
        );
        assert_eq!(a.target[0].predicate, "http://tasi.com#manufacturerName");
        assert_eq!(a.target[0].object, TermTemplate::Column("canonical_manufacturer_name".into()));
        assert_eq!(a.source.relation, "lenses.qualification_manufacturer");
        assert_eq!(parse_mappings(&m.to_obda()).unwrap().assertions, m.assertions);
    }

    #[test]
    fn empty_and_errors() {
        assert!(parse_mappings("").unwrap().is_empty());
        assert!(parse_mappings("  # only a comment\n").unwrap().is_empty());
        let err = parse_mappings("@prefix : <http://x/> .\nmappingId m\ntarget :a_{id} :p {x} .\nsource SELECT id FROM t")
            .unwrap_err();
        match err {
            VkgError::DanglingPlaceholder { name, line, .. } => {
                assert_eq!(name, "x");
                assert_eq!(line, 3);
            }
            e => panic!("unexpected {e:?}"),
        }
        let err = parse_mappings("mappingId m\ntarget nope:a :p {x} .\nsource SELECT x FROM t").unwrap_err();
        assert!(matches!(err, VkgError::UnknownPrefix { line: 2, .. }), "{err:?}");
        let err = parse_mappings("mappingId m\ntarget <http://a> <http://p/{x}> {x} .\nsource SELECT x FROM t").unwrap_err();
        assert!(matches!(err, VkgError::Syntax { line: 2, .. }), "{err:?}");
        let err = parse_mappings("mappingId m\ntarget <http://a> <http://p> {x} \nsource SELECT x FROM t").unwrap_err();
        assert!(matches!(err, VkgError::Syntax { line: 3, .. }), "{err:?}");
        let dup = "mappingId m\ntarget <http://a> a <http://C> .\nsource SELECT x FROM t\n";
        assert!(matches!(parse_mappings(&format!("{dup}{dup}")), Err(VkgError::DuplicateMapping(_))));
    }

    #[test]
    fn backticks_where_and_lists() {
        let text = "@prefix : <http://tasi.com/> .\n@prefix tasi: <http://tasi.com#> .\nmappingId m1\n\
target :c_{part_number}/{package} a tasi:PLMDB_COMPONENT ;\n  tasi:componentPn {part_number}, \"fixed\" ;\n  tasi:pkgCode {package} ; .\n\
source SELECT `part_number`,\n `package` FROM `PLMDB` WHERE family = 'FP' AND `package` = 'it''s';\n";
        let err = parse_mappings(text);
        assert!(err.is_err());
        let text = text.replace("'it''s'", "'it\\'s'");
        let m = parse_mappings(&text).unwrap();
        let a = &m.assertions[0];
        assert_eq!(a.target.len(), 4);
        assert_eq!(a.target[0].predicate, RDF_TYPE);
        assert_eq!(a.source.columns, ["part_number", "package"]);
        assert_eq!(a.source.relation, "PLMDB");
        assert_eq!(a.source.conditions, [("family".into(), "FP".into()), ("package".into(), "it's".into())]);
        assert_eq!(parse_mappings(&m.to_obda()).unwrap().assertions, m.assertions);
    }
}
