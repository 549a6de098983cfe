//! HTTP JSON API over the workbench library: classification, saliency,
//! HTP lookup and interactive crafting sessions.
//!
//! Model handles are shared read-only. Each session sits behind its own
//! mutex, so requests on one session are serialized while different
//! sessions proceed concurrently. Model work runs on the blocking pool.

mod error;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use advtext_core::attack::{AttackConfig, Knowledge, Strategies};
use advtext_core::codec::{tokenize, Doc, Token};
use advtext_core::models::{Classifier, ClassifierHandle, ModelKind};
use advtext_core::occlusion::{deviations, hsps_from_table};
use advtext_core::perturb::Lexicons;
use advtext_core::saliency::{hsps, token_scores, HotSpan, HtpEntry, HtpTable, SaliencyConfig};
use advtext_core::store;

pub use error::ApiError;
pub use session::{candidate_id, Candidate, Session, SessionView};

pub struct ModelEntry {
    pub handle: ClassifierHandle,
    pub htps: Option<HtpTable>,
}

struct Inner {
    models: BTreeMap<String, Arc<ModelEntry>>,
    lex: Arc<Lexicons>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next: AtomicU64,
    snapshot_dir: Option<PathBuf>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

pub struct Builder {
    models: BTreeMap<String, Arc<ModelEntry>>,
    lex: Lexicons,
    snapshot_dir: Option<PathBuf>,
}

impl Builder {
    /// Registers a model under its handle id, with optional HTPs for insertions.
    pub fn model(mut self, handle: ClassifierHandle, htps: Option<HtpTable>) -> Self {
        self.models
            .insert(handle.id.clone(), Arc::new(ModelEntry { handle, htps }));
        self
    }

    /// Directory for `POST /sessions/{id}/snapshot`.
    pub fn snapshot_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.snapshot_dir = Some(dir.into());
        self
    }

    pub fn build(self) -> AppState {
        AppState(Arc::new(Inner {
            models: self.models,
            lex: Arc::new(self.lex),
            sessions: Mutex::new(HashMap::new()),
            next: AtomicU64::new(1),
            snapshot_dir: self.snapshot_dir,
        }))
    }
}

impl AppState {
    pub fn builder(lex: Lexicons) -> Builder {
        Builder {
            models: BTreeMap::new(),
            lex,
            snapshot_dir: None,
        }
    }

    fn model(&self, id: &str) -> Result<Arc<ModelEntry>, ApiError> {
        self.0
            .models
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown model `{id}`")))
    }

    fn session(&self, id: &str) -> Result<(Arc<Mutex<Session>>, Arc<ModelEntry>), ApiError> {
        let s = self
            .0
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))?;
        let model = self.model(&s.lock().unwrap().model)?;
        Ok((s, model))
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Core(advtext_core::Error::InvalidArgument(format!("worker failed: {e}"))))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: ModelKind,
    pub classes: Vec<String>,
    pub has_htps: bool,
}

#[derive(Debug, Deserialize)]
struct TextBody {
    text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReply {
    pub classes: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct SaliencyBody {
    text: String,
    mode: Knowledge,
    /// Hot tokens kept in black mode.
    #[serde(default = "default_black_k")]
    k: usize,
}

fn default_black_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReply {
    pub tokens: Vec<Token>,
    pub scores: Vec<f64>,
    pub hsps: Vec<HotSpan>,
}

#[derive(Debug, Deserialize)]
struct CreateBody {
    model: String,
    text: String,
    target: String,
    #[serde(default)]
    knowledge: Option<Knowledge>,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default)]
    cap: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct SuggestBody {
    strategies: Vec<String>,
    /// Own insertion snippets as `[char offset, text]` pairs.
    #[serde(default)]
    snippets: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestReply {
    pub version: u64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Deserialize)]
struct ApplyBody {
    candidate_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReply {
    pub probs: Vec<f64>,
    pub session: SessionView,
}

async fn list_models(State(st): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(
        st.0.models
            .values()
            .map(|m| ModelInfo {
                id: m.handle.id.clone(),
                kind: m.handle.kind(),
                classes: m.handle.classes().to_vec(),
                has_htps: m.htps.is_some(),
            })
            .collect(),
    )
}

async fn classify(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ClassifyReply>, ApiError> {
    let model = st.model(&id)?;
    let req: TextBody = parse(&body)?;
    blocking(move || {
        let conf = model.handle.classify(&req.text)?;
        Ok(Json(ClassifyReply {
            classes: model.handle.classes().to_vec(),
            probs: conf.into_inner(),
        }))
    })
    .await
}

async fn saliency(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SaliencyReply>, ApiError> {
    let model = st.model(&id)?;
    let req: SaliencyBody = parse(&body)?;
    blocking(move || {
        let h = &model.handle;
        let doc = Doc::unlabeled(&req.text);
        if req.mode == Knowledge::White && h.kind() == ModelKind::External {
            return Err(ApiError::Core(advtext_core::Error::Unsupported(
                "no gradients available: model is an external oracle".into(),
            )));
        }
        let tokens = tokenize(&req.text);
        if tokens.is_empty() {
            return Ok(Json(SaliencyReply {
                tokens,
                scores: Vec::new(),
                hsps: Vec::new(),
            }));
        }
        let (scores, hsps) = match req.mode {
            Knowledge::White => (token_scores(h, &doc)?, hsps(h, &doc, &SaliencyConfig::default())?),
            Knowledge::Black => {
                let table = deviations(h, &doc)?;
                let spans = hsps_from_table(&doc, &table, req.k);
                (table.deviations, spans)
            }
        };
        Ok(Json(SaliencyReply { tokens, scores, hsps }))
    })
    .await
}

async fn get_htp(
    State(st): State<AppState>,
    Path((id, class)): Path<(String, String)>,
) -> Result<Json<Vec<HtpEntry>>, ApiError> {
    let model = st.model(&id)?;
    model.handle.class_index(&class)?;
    let table = model
        .htps
        .as_ref()
        .ok_or_else(|| ApiError::NotFound(format!("model `{id}` has no HTP table")))?;
    Ok(Json(table.require(&class)?.to_vec()))
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let req: CreateBody = parse(&body)?;
    let model = st.model(&req.model)?;
    let mut config = AttackConfig::new(req.target);
    config.knowledge = req.knowledge.unwrap_or(match model.handle.kind() {
        ModelKind::External => Knowledge::Black,
        _ => Knowledge::White,
    });
    config.budget = req.budget.unwrap_or(config.budget);
    config.cap = req.cap.unwrap_or(config.cap);
    if config.budget == 0 || config.cap == 0 {
        return Err(ApiError::BadRequest("budget and cap must be at least 1".into()));
    }
    let id = format!("s{}", st.0.next.fetch_add(1, Ordering::Relaxed));
    let st2 = st.clone();
    blocking(move || {
        let session = Session::new(id.clone(), &model, &req.text, config)?;
        let view = session.view(&model);
        st2.0.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(session)));
        Ok(Json(view))
    })
    .await
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let (s, model) = st.session(&id)?;
    let view = s.lock().unwrap().view(&model);
    Ok(Json(view))
}

async fn suggest(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SuggestReply>, ApiError> {
    let (s, model) = st.session(&id)?;
    let req: SuggestBody = parse(&body)?;
    let strategies = Strategies::parse(&req.strategies.join(","))?;
    let lex = st.0.lex.clone();
    blocking(move || {
        let mut s = s.lock().unwrap();
        let candidates = s.suggest(&model, &lex, strategies, req.snippets)?;
        Ok(Json(SuggestReply {
            version: s.version(),
            candidates,
        }))
    })
    .await
}

async fn apply(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<StepReply>, ApiError> {
    let (s, model) = st.session(&id)?;
    let req: ApplyBody = parse(&body)?;
    blocking(move || {
        let mut s = s.lock().unwrap();
        let conf = s.apply(&model, &req.candidate_id)?;
        Ok(Json(StepReply {
            probs: conf.into_inner(),
            session: s.view(&model),
        }))
    })
    .await
}

async fn undo(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<StepReply>, ApiError> {
    let (s, model) = st.session(&id)?;
    let mut s = s.lock().unwrap();
    let conf = s.undo()?;
    Ok(Json(StepReply {
        probs: conf.into_inner(),
        session: s.view(&model),
    }))
}

async fn snapshot(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let (s, model) = st.session(&id)?;
    let dir =
        st.0.snapshot_dir
            .clone()
            .ok_or_else(|| ApiError::Conflict("server was started without a snapshot directory".into()))?;
    let trace = s.lock().unwrap().trace(&model);
    let path = dir.join(format!("{id}.trace.json"));
    store::save_trace(&path, &trace)?;
    Ok(Json(serde_json::json!({ "path": path })))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/models/{id}/classify", post(classify))
        .route("/models/{id}/saliency", post(saliency))
        .route("/htp/{model}/{class}", get(get_htp))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/suggest", post(suggest))
        .route("/sessions/{id}/apply", post(apply))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/snapshot", post(snapshot))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends; `on_bound` sees the
/// actual address (useful with port 0).
pub async fn serve(addr: SocketAddr, state: AppState, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
