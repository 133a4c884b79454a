use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::{json, Value};

use qualkg::retrieval::RetrievalError;

use crate::log::{ReviewDecision, SubjectType, Verdict};
use crate::state::{annotation_key, ApplyError, Effect, Snapshot, SNAPSHOT_FILE};
use crate::{AppState, Loaded, ServiceError, View, METRICS_FILES};

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api/components/{pn}/qualifications", get(qualifications))
        .route("/api/reviews/pending", get(pending_reviews))
        .route("/api/reviews", axum::routing::post(post_review))
        .route("/api/rules/pending", get(pending_rules))
        .route("/api/metrics", get(metrics))
        .route("/api/cost", get(cost))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

impl From<ApplyError> for ApiError {
    fn from(e: ApplyError) -> Self {
        let message = e.to_string();
        match e {
            ApplyError::Malformed { code, .. } => ApiError::bad_request(code, message),
            ApplyError::UnknownSubject(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_subject", message),
            ApplyError::Conflict { code, .. } => ApiError::new(StatusCode::CONFLICT, code, message),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::internal(e)
    }
}

fn loaded(app: &AppState) -> Result<&Loaded, ApiError> {
    app.loaded.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "not_loaded",
            format!("no component database in {}", app.data_dir().display()),
        )
    })
}

fn read_only() -> ApiError {
    ApiError::new(StatusCode::FORBIDDEN, "read_only", "the service was started read-only")
}

fn parse_param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str, default: T) -> Result<T, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|_| ApiError::bad_request("bad_parameter", format!("`{key}` must be a non-negative integer, got `{raw}`"))),
    }
}

async fn health(State(app): State<Shared>) -> Json<Value> {
    let (applied, warnings) = match &app.loaded {
        Some(l) => (l.view().state.applied, l.warnings.clone()),
        None => (0, Vec::new()),
    };
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "loaded": app.loaded.is_some(),
        "read_only": app.config.read_only,
        "fingerprints": crate::fingerprints(&app),
        "decisions_applied": applied,
        "warnings": warnings,
    }))
}

async fn qualifications(
    State(app): State<Shared>,
    Path(pn): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let k = parse_param(&params, "k", app.config.default_k)?;
    if k == 0 {
        return Err(ApiError::bad_request("bad_parameter", "`k` must be at least 1"));
    }
    let view = loaded(&app)?.view();
    let worker = app.clone();
    let body = tokio::task::spawn_blocking(move || report_json(&worker, &view, &pn, k))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(body))
}

fn report_json(app: &AppState, view: &View, pn: &str, k: usize) -> Result<Value, ApiError> {
    let report = app.retriever.retrieve(&view.catalog, pn, k).map_err(|e| match e {
        RetrievalError::PnNotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "pn_not_found", e.to_string()),
        other => ApiError::internal(other),
    })?;
    let mut body = serde_json::to_value(&report).map_err(ApiError::internal)?;
    if let Some(alts) = body.get_mut("alternative").and_then(Value::as_array_mut) {
        for alt in alts {
            let number = alt.pointer("/qualification/number").and_then(Value::as_str).unwrap_or_default();
            let review = view
                .state
                .annotations
                .get(&annotation_key(pn, number))
                .map(|a| serde_json::to_value(a).unwrap_or(Value::Null))
                .unwrap_or(Value::Null);
            alt["review"] = review;
        }
    }
    Ok(body)
}

async fn pending_reviews(
    State(app): State<Shared>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let only = match params.get("type") {
        None => None,
        Some(t) => Some(SubjectType::parse(t).ok_or_else(|| {
            ApiError::bad_request(
                "bad_parameter",
                format!("unknown review type `{t}`; use Rule, PnExtraction or AlternativeCandidate"),
            )
        })?),
    };
    let view = loaded(&app)?.view();
    let wants = |t: SubjectType| only.is_none() || only == Some(t);
    let mut out = serde_json::Map::new();
    if wants(SubjectType::Rule) {
        out.insert("rules".into(), json!(view.state.pending_rules()));
    }
    if wants(SubjectType::PnExtraction) {
        out.insert("pn_extractions".into(), json!(view.state.pending_pns()));
    }
    if wants(SubjectType::AlternativeCandidate) {
        out.insert("alternative_candidates".into(), json!([]));
    }
    Ok(Json(Value::Object(out)))
}

async fn pending_rules(State(app): State<Shared>) -> Result<Json<Value>, ApiError> {
    let view = loaded(&app)?.view();
    let rules = view.state.pending_rules();
    Ok(Json(json!({ "count": rules.len(), "rules": rules })))
}

async fn metrics(State(app): State<Shared>) -> Result<Json<Value>, ApiError> {
    for name in METRICS_FILES {
        let path = app.data_dir().join(name);
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(ApiError::internal)?;
            let report: Value = serde_json::from_str(&text).map_err(ApiError::internal)?;
            return Ok(Json(json!({ "source": name, "report": report })));
        }
    }
    Err(ApiError::new(StatusCode::NOT_FOUND, "no_metrics", "no evaluation report in the data directory"))
}

async fn cost(State(app): State<Shared>, Query(params): Query<HashMap<String, String>>) -> Result<Json<Value>, ApiError> {
    let n: u64 = parse_param(&params, "n", 10_000)?;
    let model = &app.config.cost;
    let summary = model.summary();
    let row = model.row(n);
    let at = model.savings_at(n);
    Ok(Json(json!({
        "n": n,
        "minutes_per_person_day": summary.minutes_per_person_day,
        "approaches": summary.approaches,
        "asis_days": row.asis_days,
        "rag_days": row.rag_days,
        "vkg_days": row.vkg_days,
        "rag_relative": at.rag_relative,
        "vkg_relative": at.vkg_relative,
        "rag_savings": at.rag_savings,
        "vkg_savings": at.vkg_savings,
        "break_even_asis_rag": summary.break_even_asis_rag,
        "break_even_rag_vkg": summary.break_even_rag_vkg,
        "break_even_asis_vkg": summary.break_even_asis_vkg,
    })))
}

/// Body of `POST /api/reviews`. The server stamps the time; the user comes
/// from the `X-User` header when present.
#[derive(Debug, Deserialize)]
pub struct DecisionRequest {
    pub subject_type: SubjectType,
    pub subject_id: String,
    pub decision: Verdict,
    #[serde(default)]
    pub payload: Option<Value>,
    #[serde(default)]
    pub user: Option<String>,
}

async fn post_review(
    State(app): State<Shared>,
    headers: HeaderMap,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(request) = body.map_err(|e| ApiError::bad_request("malformed", e.body_text()))?;
    loaded(&app)?;
    if app.config.read_only {
        return Err(read_only());
    }
    let user = headers
        .get("x-user")
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .or(request.user.clone())
        .unwrap_or_else(|| "anonymous".to_string());
    let worker = app.clone();
    tokio::task::spawn_blocking(move || record(&worker, request, user))
        .await
        .map_err(ApiError::internal)?
        .map(Json)
}

/// Applies, appends and publishes one decision under the writer lock.
fn record(app: &AppState, request: DecisionRequest, user: String) -> Result<Value, ApiError> {
    let loaded = loaded(app)?;
    let mut writer = loaded.writer.lock().map_err(ApiError::internal)?;
    let now = Utc::now();
    let timestamp = writer.last_timestamp.map_or(now, |last| last.max(now));
    let decision = ReviewDecision {
        timestamp,
        user,
        subject_type: request.subject_type,
        subject_id: request.subject_id,
        decision: request.decision,
        payload: request.payload,
    };

    let view = loaded.view();
    let mut state = view.state.clone();
    let effect = state.apply(&loaded.base, &decision)?;
    let catalog = match effect {
        Effect::Rules => Arc::new(view.catalog.with_rules(state.rule_table()?).map_err(ApiError::internal)?),
        Effect::Cards => Arc::new(view.catalog.with_cards(state.cards(&loaded.base)).map_err(ApiError::internal)?),
        Effect::Queue | Effect::Annotation => view.catalog.clone(),
    };

    let log = writer.log.as_mut().ok_or_else(read_only)?;
    log.append(&decision)?;
    writer.last_timestamp = Some(timestamp);
    writer.since_snapshot += 1;
    if app.config.snapshot_every > 0 && writer.since_snapshot >= app.config.snapshot_every {
        let snapshot = Snapshot {
            state: state.clone(),
            last: Some(decision.clone()),
        };
        if let Err(e) = snapshot.save(&app.data_dir().join(SNAPSHOT_FILE)) {
            tracing::warn!("snapshot not written: {e}");
        } else {
            writer.since_snapshot = 0;
        }
    }
    let applied = state.applied;
    loaded.swap(View { state, catalog });
    Ok(json!({ "decision": decision, "effect": effect, "applied": applied }))
}
