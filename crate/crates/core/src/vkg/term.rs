use std::fmt;
use std::sync::Arc;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Everything except RFC 3986 unreserved characters is escaped inside
/// IRI placeholders.
const PLACEHOLDER: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

pub fn encode_placeholder(value: &str) -> String {
    utf8_percent_encode(value, PLACEHOLDER).to_string()
}

pub fn decode_placeholder(value: &str) -> Option<String> {
    percent_decode_str(value).decode_utf8().ok().map(|s| s.into_owned())
}

fn is_unreserved(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_' | '~')
}

/// An RDF term: IRIs and plain literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(Arc<str>),
    Literal(Arc<str>),
}

impl Term {
    pub fn iri(s: impl AsRef<str>) -> Self {
        Term::Iri(Arc::from(s.as_ref()))
    }

    pub fn literal(s: impl AsRef<str>) -> Self {
        Term::Literal(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Literal(s) => s,
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }
}

pub fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(s) => write!(f, "<{s}>"),
            Term::Literal(s) => write!(f, "\"{}\"", escape_literal(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Text(String),
    Column(String),
}

/// An IRI with `{column}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IriTemplate {
    pub segments: Vec<Segment>,
}

impl IriTemplate {
    /// Parses `http://x/{a}/{b}`; braces delimit column names.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut segments = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            let close = rest[open..].find('}').ok_or_else(|| format!("unclosed placeholder in `{text}`"))? + open;
            let name = &rest[open + 1..close];
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(format!("invalid placeholder `{{{name}}}`"));
            }
            segments.push(Segment::Column(name.to_string()));
            rest = &rest[close + 1..];
        }
        if rest.contains('}') {
            return Err(format!("unbalanced `}}` in `{text}`"));
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        Ok(Self { segments })
    }

    pub fn constant(iri: &str) -> Self {
        Self {
            segments: vec![Segment::Text(iri.to_string())],
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Column(c) => Some(c.as_str()),
            Segment::Text(_) => None,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.columns().next().is_none()
    }

    pub fn constant_text(&self) -> Option<String> {
        self.is_constant().then(|| self.render_with(|_| Some(String::new())).unwrap_or_default())
    }

    /// Leading constant text, used to rule out templates that can never
    /// produce the same IRI.
    pub fn prefix(&self) -> &str {
        match self.segments.first() {
            Some(Segment::Text(t)) => t,
            _ => "",
        }
    }

    pub fn render_with<F>(&self, mut value: F) -> Option<String>
    where
        F: FnMut(&str) -> Option<String>,
    {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Column(c) => out.push_str(&encode_placeholder(&value(c)?)),
            }
        }
        Some(out)
    }

    /// Distinct column tuples always yield distinct IRIs: placeholders are
    /// separated by text holding a character that encoding never emits.
    pub fn is_injective(&self) -> bool {
        let mut prev_column = false;
        for seg in &self.segments {
            match seg {
                Segment::Column(_) if prev_column => return false,
                Segment::Column(_) => prev_column = true,
                Segment::Text(t) => {
                    if prev_column && t.chars().all(|c| is_unreserved(c) || c == '%') {
                        return false;
                    }
                    prev_column = false;
                }
            }
        }
        true
    }

    /// Recovers column values from an IRI built by this template. Only
    /// defined for injective templates.
    pub fn invert(&self, iri: &str) -> Option<Vec<(String, String)>> {
        if !self.is_injective() {
            return None;
        }
        let mut out = Vec::new();
        let mut rest = iri;
        let mut i = 0;
        while i < self.segments.len() {
            match &self.segments[i] {
                Segment::Text(t) => rest = rest.strip_prefix(t.as_str())?,
                Segment::Column(c) => {
                    let end = rest.find(|ch: char| !is_unreserved(ch) && ch != '%').unwrap_or(rest.len());
                    let end = match self.segments.get(i + 1) {
                        Some(Segment::Text(next)) => {
                            let stop = next.find(|ch: char| !is_unreserved(ch) && ch != '%').unwrap_or(0);
                            let head = &next[..stop];
                            if !rest[..end].ends_with(head) {
                                return None;
                            }
                            end - head.len()
                        }
                        _ => end,
                    };
                    out.push((c.clone(), decode_placeholder(&rest[..end])?));
                    rest = &rest[end..];
                }
            }
            i += 1;
        }
        rest.is_empty().then_some(out)
    }
}

impl fmt::Display for IriTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => f.write_str(t)?,
                Segment::Column(c) => write!(f, "{{{c}}}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_render() {
        let t = IriTemplate::parse("http://tasi.com/c_{part_number}/{package}").unwrap();
        assert_eq!(t.columns().collect::<Vec<_>>(), ["part_number", "package"]);
        let iri = t
            .render_with(|c| Some(if c == "part_number" { "P1/2".into() } else { "FP 1".into() }))
            .unwrap();
        assert_eq!(iri, "http://tasi.com/c_P1%2F2/FP%201");
        assert!(t.is_injective());
        assert_eq!(
            t.invert(&iri).unwrap(),
            vec![("part_number".to_string(), "P1/2".to_string()), ("package".to_string(), "FP 1".to_string())]
        );
        assert!(IriTemplate::parse("x{a}{b}").unwrap().is_injective() == false);
        assert!(IriTemplate::parse("x{a}_{b}").unwrap().is_injective() == false);
        assert!(IriTemplate::parse("x{").is_err());
    }

    proptest! {
        #[test]
        fn invert_round_trips(a in "\\PC{0,8}", b in "\\PC{0,8}", c in "\\PC{0,8}") {
            let t = IriTemplate::parse("http://tasi.com/c_{a}/{b}/{c}").unwrap();
            let iri = t.render_with(|col| Some(match col { "a" => a.clone(), "b" => b.clone(), _ => c.clone() })).unwrap();
            let back = t.invert(&iri).unwrap();
            prop_assert_eq!(back, vec![("a".into(), a), ("b".into(), b), ("c".into(), c)]);
        }
    }
}
