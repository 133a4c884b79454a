//! A small ontology-based data access engine.
//!
//! Mappings declare how rows of in-memory tables (or lenses over them)
//! become RDF triples. Graph-pattern queries are unfolded through the
//! mappings into relational plans and evaluated directly over the tables,
//! so no triple store is ever built. [`oracle`] does build one, as a
//! reference implementation for tests.

mod cursor;
pub mod eval;
pub mod mapping;
pub mod oracle;
pub mod plan;
pub mod query;
pub mod store;
pub mod term;

use thiserror::Error;

pub use eval::{evaluate, ResultTable};
pub use mapping::{parse_mappings, MappingAssertion, MappingSet, SourceQuery, TermTemplate, TripleTemplate};
pub use oracle::{materialize_triples, naive_match, TripleSet};
pub use plan::{unfold, unfold_optimized, Expr, Predicate, RelationalPlan, UnfoldedQuery};
pub use query::{parse_query, PatternTerm, QueryAst, QueryTemplate, TriplePattern};
pub use store::{LensDef, SharedStore, Store, Table, VirtualRelation};
pub use term::{escape_literal, IriTemplate, Term, RDF_TYPE};

/// Mapping of the component database and qualification catalog.
pub const QUALIFICATION_MAPPINGS: &str = include_str!("../../resources/qualification.obda");
/// Direct qualifications for `{selected_value}`.
pub const DIRECT_QUERY: &str = include_str!("../../resources/direct.rq");
/// Cards sharing package, subpackage and manufacturer, with an extracted PN.
pub const SIMILARITY_QUERY: &str = include_str!("../../resources/similarity.rq");
/// Cards with `{package}` and canonical `{manufacturer}`.
pub const ALTERNATIVE_GENERIC_QUERY: &str = include_str!("../../resources/alternative_generic.rq");
/// Cards with `{package}` and the attributes the flat-package rule compares.
pub const ALTERNATIVE_FP_QUERY: &str = include_str!("../../resources/alternative_fp.rq");

pub const CARD_IRI_TEMPLATE: &str = "http://tasi.com/q_{number}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VkgError {
    #[error("line {line}, column {column}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}, column {column}: unknown prefix `{prefix}:`")]
    UnknownPrefix { prefix: String, line: usize, column: usize },
    #[error("line {line}, column {column}: placeholder {{{name}}} in mapping {mapping} is not a source column")]
    DanglingPlaceholder {
        name: String,
        mapping: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: unsupported feature: {feature}")]
    Unsupported { feature: String, line: usize, column: usize },
    #[error("duplicate mapping id {0}")]
    DuplicateMapping(String),
    #[error("variable ?{0} does not occur in any pattern")]
    UnknownVariable(String),
    #[error("no table or lens named {0}")]
    MissingRelation(String),
    #[error("relation {relation} has no column {column}")]
    MissingColumn { relation: String, column: String },
    #[error("{0}")]
    Registration(String),
}

/// Parses, unfolds (optimized) and evaluates a query.
pub fn run_query(query: &QueryAst, mappings: &MappingSet, store: &Store) -> Result<ResultTable, VkgError> {
    evaluate(&unfold_optimized(query, mappings, store).plan, store)
}

/// The qualification number encoded in a card IRI.
pub fn card_number(iri: &Term) -> Option<String> {
    let template = IriTemplate::parse(CARD_IRI_TEMPLATE).ok()?;
    match iri {
        Term::Iri(i) => template.invert(i)?.pop().map(|(_, v)| v),
        Term::Literal(_) => None,
    }
}

pub fn qualification_mappings() -> MappingSet {
    parse_mappings(QUALIFICATION_MAPPINGS).expect("bundled mapping file parses")
}
