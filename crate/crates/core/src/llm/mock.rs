use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LlmBackend, LlmError, LlmRequest, LlmTask};

const SUFFIX_TOKENS: [&str; 10] = [
    "corp",
    "corporation",
    "inc",
    "incorporated",
    "inter",
    "international",
    "ltd",
    "gmbh",
    "sa",
    "spa",
];

fn pn_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bpn[\s\p{P}]+([A-Za-z0-9]{5,})").expect("static regex"))
}

/// Every PN-like token in `note`, in order of appearance.
pub fn mock_extract_pn_all(note: &str) -> Vec<String> {
    pn_regex()
        .captures_iter(note)
        .map(|c| c[1].to_string())
        .collect()
}

/// The first token following a `pn` marker, verbatim.
pub fn mock_extract_pn(note: &str) -> Option<String> {
    pn_regex().captures(note).map(|c| c[1].to_string())
}

/// Casefolded, punctuation-free name with trailing corporate suffixes
/// removed (at least one token is always kept).
pub fn normalization_key(name: &str) -> String {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    let punct = PUNCT.get_or_init(|| Regex::new(r"[\p{P}\p{S}]+").expect("static regex"));
    let cleaned = punct.replace_all(name, "").to_lowercase();
    let mut tokens: Vec<&str> = cleaned.split_whitespace().collect();
    while tokens.len() > 1 && SUFFIX_TOKENS.contains(tokens.last().expect("nonempty")) {
        tokens.pop();
    }
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub canonical: String,
    pub variants: Vec<String>,
}

/// Lexical clustering of manufacturer names; singletons produce no rule.
pub fn mock_normalization_rules<'a, I>(names: I) -> Vec<MockRule>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut clusters: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in names {
        let members = clusters.entry(normalization_key(name)).or_default();
        if !members.iter().any(|m| m == name) {
            members.push(name.to_string());
        }
    }
    let mut rules: Vec<MockRule> = clusters
        .into_values()
        .filter(|members| members.len() >= 2)
        .map(|mut members| {
            members.sort();
            let canonical = members
                .iter()
                .min_by(|a, b| a.chars().count().cmp(&b.chars().count()).then_with(|| a.cmp(b)))
                .expect("cluster nonempty")
                .clone();
            MockRule {
                canonical,
                variants: members,
            }
        })
        .collect();
    rules.sort_by(|a, b| a.canonical.cmp(&b.canonical));
    rules
}

/// Deterministic offline backend; reads the request payload.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let reply = match request.task {
            LlmTask::PnExtraction => {
                let note = request.payload.get("note").and_then(Value::as_str).unwrap_or("");
                let mut all = mock_extract_pn_all(note);
                if all.is_empty() {
                    json!({ "pn": null })
                } else {
                    let first = all.remove(0);
                    if all.is_empty() {
                        json!({ "pn": first })
                    } else {
                        json!({ "pn": first, "additional": all })
                    }
                }
            }
            LlmTask::NormalizationRules => {
                let names: Vec<&str> = request
                    .payload
                    .get("names")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(Value::as_str).collect())
                    .unwrap_or_default();
                json!({ "rules": mock_normalization_rules(names) })
            }
            LlmTask::RagClassification => crate::rag::mock_classify_payload(&request.payload),
        };
        Ok(reply.to_string())
    }
}
