//! A fitted synthetic checkpoint and request helpers for the API suites.
#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use biae_core::checkpoint::Checkpoint;
use biae_core::config::ServeConfig;
use biae_core::corpus::{DecisionLabel, HistoryTurn};
use biae_core::dialogue::{DialogueEngine, SessionStore};
use biae_core::pipeline::{DecisionMaker, Prediction, Predictor};
use biae_core::synthetic::{overfit_config, synthetic_corpus, train_checkpoint};
use biae_server::{router, AppState, ModelInfo};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn checkpoint() -> &'static Checkpoint {
    static CKPT: OnceLock<Checkpoint> = OnceLock::new();
    CKPT.get_or_init(|| train_checkpoint(&synthetic_corpus(), &overfit_config(200)).unwrap().0)
}

pub fn predictor() -> Arc<Predictor> {
    Arc::new(Predictor::from_checkpoint(checkpoint()).unwrap())
}

pub fn app_with(serve: &ServeConfig) -> Router {
    let ckpt = checkpoint();
    let state = AppState::from_predictor(predictor(), ckpt.config_hash.clone(), ckpt.dim, serve).unwrap();
    router(Arc::new(state))
}

pub fn app() -> Router {
    app_with(&ServeConfig::default())
}

/// The real predictor with every decision overridden to MORE, so sessions
/// run until the turn cap.
pub struct AlwaysMore(pub Arc<Predictor>);

impl DecisionMaker for AlwaysMore {
    fn decide(&self, document: &str, question: &str, scenario: &str, history: &[HistoryTurn]) -> biae_core::Result<Prediction> {
        let mut p = self.0.decide(document, question, scenario, history)?;
        p.decision = DecisionLabel::More;
        Ok(p)
    }
}

/// Routes whose sessions use `decider` while `/predict` uses the real predictor.
pub fn app_with_decider(decider: Arc<dyn DecisionMaker>, turn_cap: usize) -> Router {
    let predictor = predictor();
    let engine = DialogueEngine::new(decider, predictor.generator().clone(), turn_cap);
    let info = ModelInfo {
        config_hash: checkpoint().config_hash.clone(),
        dim: checkpoint().dim,
        generator: predictor.generator().name().to_string(),
        turn_cap,
    };
    router(Arc::new(AppState::new(SessionStore::new(engine), predictor, info)))
}

pub async fn call(app: &Router, method: Method, path: &str, body: Option<&Value>) -> (StatusCode, Value) {
    call_raw(app, method, path, body.map(|b| b.to_string())).await
}

pub async fn call_raw(app: &Router, method: Method, path: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(path);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

pub fn family(k: usize) -> (String, String) {
    let inst = synthetic_corpus().into_iter().find(|i| i.utterance_id == format!("synthetic{k}-more")).unwrap();
    (inst.document, inst.question)
}
