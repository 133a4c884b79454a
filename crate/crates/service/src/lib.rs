//! HTTP service over qualification retrieval, cleaning review and the cost
//! model. Reviewer decisions go to an append-only log and are folded into
//! the served state.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use thiserror::Error;

use qualkg::cost::CostModel;
use qualkg::dataset::{Dataset, DatasetError};
use qualkg::retrieval::{Catalog, RetrievalError, Retriever, DEFAULT_ALTERNATIVE_K};
use qualkg::vector::{Embedder, LocalEmbedder};

mod api;
pub mod log;
pub mod state;

pub use api::router;
pub use log::{read_log, DecisionLog, ReviewDecision, SubjectType, Verdict, DECISIONS_FILE};
pub use state::{annotation_key, Annotation, ApplyError, Base, Effect, Materialized, Snapshot, SNAPSHOT_FILE};

/// Report files `/api/metrics` serves, first match wins.
pub const METRICS_FILES: [&str; 2] = ["rag_report.json", "eval_report.json"];

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("decision log: {0}")]
    Log(String),
    #[error("data: {0}")]
    Data(String),
}

impl ServiceError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Refuse every mutating request.
    pub read_only: bool,
    /// Write a state snapshot after this many appended decisions; 0 never.
    pub snapshot_every: usize,
    pub default_k: usize,
    pub cost: CostModel,
    pub embedder: Arc<dyn Embedder>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            read_only: false,
            snapshot_every: 50,
            default_k: DEFAULT_ALTERNATIVE_K,
            cost: CostModel::default(),
            embedder: Arc::new(LocalEmbedder),
        }
    }
}

/// What readers see; replaced wholesale by the writer.
pub struct View {
    pub state: Materialized,
    pub catalog: Arc<Catalog>,
}

pub(crate) struct Writer {
    /// Absent when the service is read-only.
    log: Option<DecisionLog>,
    last_timestamp: Option<DateTime<Utc>>,
    since_snapshot: usize,
}

pub struct Loaded {
    pub base: Base,
    view: RwLock<Arc<View>>,
    writer: std::sync::Mutex<Writer>,
    pub warnings: Vec<String>,
}

impl Loaded {
    pub fn view(&self) -> Arc<View> {
        self.view.read().expect("view lock poisoned").clone()
    }

    fn swap(&self, next: View) {
        *self.view.write().expect("view lock poisoned") = Arc::new(next);
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub retriever: Retriever,
    pub loaded: Option<Loaded>,
}

impl AppState {
    /// Loads the data directory and refolds its decision log. A directory
    /// without a component database yields a state that answers 503.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let loaded = match Base::load(&config.data_dir)? {
            None => None,
            Some(base) => Some(load_state(&config, base)?),
        };
        Ok(Self {
            config,
            retriever: Retriever::default(),
            loaded,
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }
}

fn load_state(config: &ServiceConfig, base: Base) -> Result<Loaded, ServiceError> {
    let log_path = config.data_dir.join(DECISIONS_FILE);
    let decisions = log::fold_order(read_log(&log_path)?);
    let snapshot = Snapshot::load(&config.data_dir.join(SNAPSHOT_FILE));
    let (state, warnings) = state::fold(&base, &decisions, snapshot);
    let catalog = build_catalog(config, &base, &state)?;
    let last_timestamp = decisions.last().map(|d| d.timestamp);
    Ok(Loaded {
        view: RwLock::new(Arc::new(View {
            state,
            catalog: Arc::new(catalog),
        })),
        writer: std::sync::Mutex::new(Writer {
            log: if config.read_only { None } else { Some(DecisionLog::open(&log_path)?) },
            last_timestamp,
            since_snapshot: 0,
        }),
        base,
        warnings,
    })
}

fn build_catalog(config: &ServiceConfig, base: &Base, state: &Materialized) -> Result<Catalog, ServiceError> {
    let dataset = Dataset::new(base.plm.clone(), state.cards(base), state.rule_table()?);
    Ok(Catalog::new(dataset, config.embedder.clone())?)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::io(format!("bind {addr}"), e))?;
    serve_on(state, listener, std::future::pending()).await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on<F>(state: Arc<AppState>, listener: tokio::net::TcpListener, shutdown: F) -> Result<(), ServiceError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let local = listener.local_addr().map_err(|e| ServiceError::io("listener", e))?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| ServiceError::io(format!("serve {local}"), e))
}

/// File name to SHA-256 for everything the service loaded.
pub fn fingerprints(state: &AppState) -> BTreeMap<String, String> {
    state
        .loaded
        .as_ref()
        .map(|l| l.base.fingerprints.clone())
        .unwrap_or_default()
}
