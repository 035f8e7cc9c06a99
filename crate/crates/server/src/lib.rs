//! HTTP/JSON front end for the dialogue engine.
//!
//! Routes:
//! - `POST /sessions` with `{document, question, scenario?}`
//! - `POST /sessions/{id}/answer` with `{answer: "YES" | "NO"}`
//! - `GET /sessions/{id}`
//! - `POST /predict` with `{document, question, scenario?, history?}`
//! - `GET /healthz`
//!
//! Model work runs on the blocking pool; sessions are serialized per id by
//! the store.

mod error;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use biae_core::checkpoint::Checkpoint;
use biae_core::config::ServeConfig;
use biae_core::corpus::{load_dataset, Split};
use biae_core::dialogue::{CreateSession, DialogueEngine, SessionState, SessionStore};
use biae_core::pipeline::{DecisionMaker, Prediction, Predictor};
use biae_core::qgen::{augment, natural_generation_set, QuestionGenerator, RetrievalGenerator, TemplateGenerator};
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;

pub use biae_core::wire::{AnswerRequest, ErrorBody, ErrorDetail, Health, ModelInfo, PredictRequest};
pub use error::ApiError;

pub struct AppState {
    store: SessionStore,
    predictor: Arc<dyn Predict>,
    info: ModelInfo,
}

/// One-shot prediction including the follow-up question on MORE.
pub trait Predict: Send + Sync {
    fn predict(&self, request: &PredictRequest) -> biae_core::Result<Prediction>;
}

impl Predict for Predictor {
    fn predict(&self, r: &PredictRequest) -> biae_core::Result<Prediction> {
        Predictor::predict(self, &r.document, &r.question, &r.scenario, &r.history)
    }
}

impl AppState {
    pub fn new(store: SessionStore, predictor: Arc<dyn Predict>, info: ModelInfo) -> Self {
        Self { store, predictor, info }
    }

    /// Sessions and one-shot predictions both backed by `predictor`.
    pub fn from_predictor(predictor: Arc<Predictor>, config_hash: String, dim: usize, serve: &ServeConfig) -> biae_core::Result<Self> {
        let generator = predictor.generator().clone();
        let info = ModelInfo {
            config_hash,
            dim,
            generator: generator.name().to_string(),
            turn_cap: serve.turn_cap,
        };
        let engine = DialogueEngine::new(predictor.clone() as Arc<dyn DecisionMaker>, generator, serve.turn_cap);
        let mut store = SessionStore::new(engine);
        if let Some(dir) = &serve.session_dir {
            store = store.with_persistence(dir.clone())?;
        }
        Ok(Self::new(store, predictor, info))
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }
}

/// The generator named by `serve.generator`. The retrieval generator is
/// fitted on the natural and augmented samples of `train_path`.
pub fn build_generator(serve: &ServeConfig, train_path: Option<PathBuf>) -> biae_core::Result<Arc<dyn QuestionGenerator>> {
    Ok(match serve.generator.as_str() {
        "template" => Arc::new(TemplateGenerator::default()),
        "retrieval" => {
            let path = train_path.ok_or_else(|| {
                biae_core::Error::Config("the retrieval generator needs the training split".into())
            })?;
            let train = load_dataset(&path, Split::Train)?;
            let mut samples = natural_generation_set(&train);
            samples.extend(augment(&train));
            Arc::new(RetrievalGenerator::fit(&samples)?)
        }
        other => return Err(biae_core::Error::Config(format!("unknown generator `{other}`"))),
    })
}

/// Loads the checkpoint and builds the configured generator.
pub fn load_state(checkpoint: &Path, serve: &ServeConfig, train_path: Option<PathBuf>) -> biae_core::Result<AppState> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let generator = build_generator(serve, train_path)?;
    let predictor = Arc::new(Predictor::from_checkpoint_with(&ckpt, generator)?);
    AppState::from_predictor(predictor, ckpt.config_hash.clone(), ckpt.dim, serve)
}

type Shared = Arc<AppState>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> biae_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Task(e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_session(
    State(app): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionState>), ApiError> {
    let Json(request) = body?;
    let state = blocking(move || app.store.create(&request)).await?;
    Ok((StatusCode::CREATED, Json(state)))
}

async fn answer_session(
    State(app): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<SessionState>, ApiError> {
    let Json(request) = body?;
    let state = blocking(move || app.store.answer(&id, request.answer)).await?;
    Ok(Json(state))
}

async fn get_session(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionState>, ApiError> {
    let state = blocking(move || app.store.get(&id)).await?;
    Ok(Json(state))
}

async fn predict(
    State(app): State<Shared>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<Prediction>, ApiError> {
    let Json(request) = body?;
    let prediction = blocking(move || app.predictor.predict(&request)).await?;
    Ok(Json(prediction))
}

async fn health(State(app): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: app.store.len(),
        model: app.info.clone(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/predict", post(predict))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer_session))
        .layer(CorsLayer::permissive())
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    serve_until(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves until `shutdown` resolves, then drains open connections.
pub async fn serve_until<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
