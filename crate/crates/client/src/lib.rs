//! Async client for the dialogue service.

use biae_core::corpus::TurnAnswer;
use biae_core::dialogue::{CreateSession, SessionState};
use biae_core::pipeline::Prediction;
use biae_core::wire::{AnswerRequest, ErrorBody, Health, PredictRequest};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use url::Url;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid service URL: {0}")]
    Url(#[from] url::ParseError),

    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),

    /// The service answered with an error body.
    #[error("{status}: {kind}: {message}")]
    Api {
        status: StatusCode,
        kind: String,
        message: String,
    },
}

impl ClientError {
    /// HTTP status for service-side errors.
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
            ClientError::Url(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: Url,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self> {
        Self::with_http(base, reqwest::Client::new())
    }

    pub fn with_http(base: &str, http: reqwest::Client) -> Result<Self> {
        let mut base = Url::parse(base)?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        Ok(Self { http, base })
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    async fn send<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let url = self.base.join(path)?;
        let mut request = self.http.request(method, url);
        if let Some(body) = body {
            request = request.json(body);
        }
        let response = request.send().await?;
        let status = response.status();
        if status.is_success() {
            return Ok(response.json().await?);
        }
        let text = response.text().await?;
        let (kind, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error.kind, b.error.message),
            Err(_) => ("unknown".to_string(), text),
        };
        Err(ClientError::Api { status, kind, message })
    }

    pub async fn health(&self) -> Result<Health> {
        self.send::<(), _>(Method::GET, "healthz", None).await
    }

    pub async fn create_session(&self, request: &CreateSession) -> Result<SessionState> {
        self.send(Method::POST, "sessions", Some(request)).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionState> {
        self.send::<(), _>(Method::GET, &format!("sessions/{}", segment(id)), None).await
    }

    pub async fn answer(&self, id: &str, answer: TurnAnswer) -> Result<SessionState> {
        let body = AnswerRequest { answer };
        self.send(Method::POST, &format!("sessions/{}/answer", segment(id)), Some(&body)).await
    }

    pub async fn predict(&self, request: &PredictRequest) -> Result<Prediction> {
        self.send(Method::POST, "predict", Some(request)).await
    }
}

/// Percent-encodes a path segment.
fn segment(id: &str) -> String {
    url::form_urlencoded::byte_serialize(id.as_bytes()).collect::<String>().replace('+', "%20")
}
