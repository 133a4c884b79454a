//! Chat-completion gateway with JSON-constrained output.
//!
//! A request carries a prompt, a response schema and the structured payload
//! the prompt was rendered from. The gateway sends it to a backend, parses
//! the reply, checks it against the schema and retries on non-compliant
//! output. Model misbehavior never surfaces as an error; only transport
//! failures do.

mod http;
mod mock;
pub mod schema;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{mock_extract_pn, mock_extract_pn_all, mock_normalization_rules, normalization_key, MockBackend, MockRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LlmTask {
    NormalizationRules,
    PnExtraction,
    RagClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub task: LlmTask,
    pub prompt: String,
    pub response_schema: String,
    pub max_retries: u32,
    /// The data the prompt was rendered from; offline backends read it
    /// instead of parsing the prompt text.
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw_text: String,
    pub parsed: Option<Value>,
    pub compliant: bool,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

pub const PN_SCHEMA: &str = r#"{"type":"object","required":["pn"],"properties":{"pn":{"type":["string","null"]},"additional":{"type":"array","items":{"type":"string"}}}}"#;

pub const RULES_SCHEMA: &str = r#"{"type":"object","required":["rules"],"properties":{"rules":{"type":"array","items":{"type":"object","required":["canonical","variants"],"properties":{"canonical":{"type":"string"},"variants":{"type":"array","items":{"type":"string"}}}}}}}"#;

pub const RAG_SCHEMA: &str = r#"{"type":"object","required":["direct","similarity","alternative"],"properties":{"direct":{"type":"array","items":{"type":"string"}},"similarity":{"type":"array","items":{"type":"string"}},"alternative":{"type":"array","items":{"type":"string"}}}}"#;

const RULES_PROMPT: &str = "\
You clean manufacturer names for an electronic component catalog.
Group the names below that denote the same company and choose one canonical
spelling per group. Use only names from the list. Leave names that stand
alone out of the answer.

Example input: [\"Acme\", \"Acme Corp\", \"ACME Inc.\", \"Borel\"]
Example output: {\"rules\": [{\"canonical\": \"Acme\", \"variants\": [\"Acme\", \"Acme Corp\", \"ACME Inc.\"]}]}

Answer with JSON only, matching this schema:
";

const PN_PROMPT: &str = "\
Extract the component part number from a qualification note. Part numbers
follow the token \"pn\". Reply {\"pn\": null} when the note has none.

Example note: \"C7 (pn Q7654321) reflowed on ceramic\"
Example output: {\"pn\": \"Q7654321\"}
Example note: \"hand soldered, stand-off 0.1 mm\"
Example output: {\"pn\": null}

Answer with JSON only, matching this schema:
";

const RAG_PROMPT: &str = "\
You match one electronic component against candidate qualification cards.
- direct: the card's part number (from its notes), package code, subpackage
  code and manufacturer all equal the component's.
- similarity: package code, subpackage code and manufacturer equal, part
  number different.
- alternative: only when no direct or similarity card exists; package code
  and manufacturer equal.
Manufacturer spellings that differ only by case, punctuation or a corporate
suffix denote the same company. Use only qualification numbers present in
the context.

Answer with JSON only, matching this schema:
";

impl LlmRequest {
    fn build(task: LlmTask, template: &str, schema: &str, payload: Value) -> Self {
        let prompt = format!(
            "{template}{schema}\n\nInput:\n{}\n",
            serde_json::to_string_pretty(&payload).expect("payload serializes")
        );
        Self {
            task,
            prompt,
            response_schema: schema.to_string(),
            max_retries: 2,
            payload,
        }
    }

    pub fn normalization_rules(names: &[String]) -> Self {
        Self::build(
            LlmTask::NormalizationRules,
            RULES_PROMPT,
            RULES_SCHEMA,
            serde_json::json!({ "names": names }),
        )
    }

    pub fn pn_extraction(note: &str) -> Self {
        Self::build(LlmTask::PnExtraction, PN_PROMPT, PN_SCHEMA, serde_json::json!({ "note": note }))
    }

    pub fn rag_classification(component: Value, context: Vec<Value>) -> Self {
        Self::build(
            LlmTask::RagClassification,
            RAG_PROMPT,
            RAG_SCHEMA,
            serde_json::json!({ "component": component, "context": context }),
        )
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn check(&self) -> Result<Value, LlmError> {
        if self.prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        serde_json::from_str(&self.response_schema)
            .map_err(|e| LlmError::InvalidRequest(format!("response schema is not JSON: {e}")))
    }
}

/// Extracts the JSON document from a reply, tolerating a surrounding
/// markdown code fence.
pub fn parse_reply(raw: &str) -> Option<Value> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    let body = trimmed.strip_prefix("```")?;
    let body = body.strip_prefix("json").unwrap_or(body);
    let body = body.strip_suffix("```")?;
    serde_json::from_str(body.trim()).ok()
}

#[derive(Clone)]
pub struct LlmGateway {
    backend: Arc<dyn LlmBackend>,
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway").field("backend", &self.backend.name()).finish()
    }
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Self { backend }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(MockBackend))
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let schema = request.check()?;
        let mut last = LlmResponse {
            raw_text: String::new(),
            parsed: None,
            compliant: false,
            attempts: 0,
            violation: None,
        };
        let mut transport: Option<LlmError> = None;
        for attempt in 1..=request.max_retries + 1 {
            let raw = match self.backend.send(request) {
                Ok(raw) => raw,
                Err(e @ LlmError::Transport(_)) => {
                    transport = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            transport = None;
            let parsed = parse_reply(&raw);
            let violation = match &parsed {
                None => Some("reply is not JSON".to_string()),
                Some(v) => schema::validate(&schema, v).err(),
            };
            last = LlmResponse {
                raw_text: raw,
                compliant: violation.is_none(),
                parsed,
                attempts: attempt,
                violation,
            };
            if last.compliant {
                return Ok(last);
            }
        }
        match transport {
            Some(e) if last.attempts == 0 => Err(e),
            _ => Ok(last),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<String, LlmError>>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<String, LlmError>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Self {
                replies: Mutex::new(replies),
            })
        }
    }

    impl LlmBackend for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn send(&self, _: &LlmRequest) -> Result<String, LlmError> {
            self.replies.lock().unwrap().pop().unwrap_or_else(|| Ok(String::new()))
        }
    }

    #[test]
    fn retries_until_compliant() {
        let gw = LlmGateway::new(Scripted::new(vec![
            Ok("not json".into()),
            Ok("{\"pn\": 5}".into()),
            Ok("```json\n{\"pn\": \"P1\"}\n```".into()),
        ]));
        let r = gw.complete(&LlmRequest::pn_extraction("x")).unwrap();
        assert!(r.compliant);
        assert_eq!(r.attempts, 3);
        assert_eq!(r.parsed.unwrap()["pn"], "P1");
    }

    #[test]
    fn gives_up_without_error() {
        let gw = LlmGateway::new(Scripted::new(vec![Ok("no".into()), Ok("no".into()), Ok("no".into())]));
        let r = gw.complete(&LlmRequest::pn_extraction("x")).unwrap();
        assert!(!r.compliant);
        assert_eq!(r.attempts, 3);
        assert_eq!(r.violation.as_deref(), Some("reply is not JSON"));
    }

    #[test]
    fn transport_error_after_retries() {
        let t = || Err(LlmError::Transport("down".into()));
        let gw = LlmGateway::new(Scripted::new(vec![t(), t(), t()]));
        assert!(matches!(gw.complete(&LlmRequest::pn_extraction("x")), Err(LlmError::Transport(_))));
        let gw = LlmGateway::new(Scripted::new(vec![t(), Ok("{\"pn\":null}".into())]));
        assert!(gw.complete(&LlmRequest::pn_extraction("x")).unwrap().compliant);
    }

    #[test]
    fn rejects_invalid_requests() {
        let mut req = LlmRequest::pn_extraction("x");
        req.response_schema = "{oops".into();
        assert!(matches!(LlmGateway::mock().complete(&req), Err(LlmError::InvalidRequest(_))));
        req.prompt = " ".into();
        assert!(matches!(LlmGateway::mock().complete(&req), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn compliant_implies_parsed() {
        let r = LlmGateway::mock()
            .complete(&LlmRequest::pn_extraction("R1 (pn P3333333) double component"))
            .unwrap();
        assert!(r.compliant && r.parsed.is_some());
        assert_eq!(r.parsed.unwrap()["pn"], "P3333333");
    }
}
