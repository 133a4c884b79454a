use std::fmt;

use serde_json::json;

use qualkg::cleaning::CleaningError;
use qualkg::corpus::CorpusError;
use qualkg::cost::CostError;
use qualkg::dataset::DatasetError;
use qualkg::llm::LlmError;
use qualkg::rag::RagError;
use qualkg::retrieval::RetrievalError;
use qualkg::vector::VectorError;
use qualkg_service::ServiceError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data { code: &'static str, message: String },
    Transport(String),
}

impl Failure {
    pub fn data(code: &'static str, message: impl Into<String>) -> Self {
        Failure::Data {
            code,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data { .. } => EXIT_DATA,
            Failure::Transport(_) => EXIT_TRANSPORT,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Data { code, .. } => code,
            Failure::Transport(_) => "transport",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Transport(m) | Failure::Data { message: m, .. } => m,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "code": self.code(), "exit_code": self.exit_code(), "message": self.message() })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code(), self.message())
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::data("data_error", e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::data("invalid_config", e.to_string())
    }
}

impl From<CostError> for Failure {
    fn from(e: CostError) -> Self {
        Failure::data("invalid_cost_model", e.to_string())
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Transport(_) => Failure::Transport(e.to_string()),
            LlmError::InvalidRequest(_) => Failure::data("invalid_request", e.to_string()),
        }
    }
}

impl From<VectorError> for Failure {
    fn from(e: VectorError) -> Self {
        match e {
            VectorError::Transport(_) => Failure::Transport(e.to_string()),
            other => Failure::data("vector_error", other.to_string()),
        }
    }
}

impl From<CleaningError> for Failure {
    fn from(e: CleaningError) -> Self {
        match e {
            CleaningError::Llm(inner) => inner.into(),
            CleaningError::Interrupted { .. } => Failure::Transport(e.to_string()),
            other => Failure::data("cleaning_error", other.to_string()),
        }
    }
}

impl From<RagError> for Failure {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Vector(v) => v.into(),
            RagError::Llm(l) => l.into(),
            RagError::Invalid(m) => Failure::Usage(m),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::PnNotFound(_) => Failure::data("pn_not_found", e.to_string()),
            RetrievalError::Vector(v) => v.into(),
            RetrievalError::Vkg(_) => Failure::data("query_error", e.to_string()),
        }
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Dataset(d) => d.into(),
            ServiceError::Retrieval(r) => r.into(),
            other => Failure::data("data_error", other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data("io_error", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::data("json_error", e.to_string())
    }
}
