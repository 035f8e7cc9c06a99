//! HTTP request and response bodies shared by the service and its client.
//! Sessions travel as [`crate::dialogue::SessionState`] and one-shot
//! predictions as [`crate::pipeline::Prediction`].

use serde::{Deserialize, Serialize};

use crate::corpus::{HistoryTurn, TurnAnswer};

/// `{answer: "YES" | "NO"}`; matching is case-insensitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub answer: TurnAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub document: String,
    pub question: String,
    #[serde(default)]
    pub scenario: String,
    #[serde(default)]
    pub history: Vec<HistoryTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub model: ModelInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub config_hash: String,
    pub dim: usize,
    pub generator: String,
    pub turn_cap: usize,
}

/// `{"error": {"kind": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_accepts_upper_case_and_rejects_others() {
        let a: AnswerRequest = serde_json::from_str(r#"{"answer": "YES"}"#).unwrap();
        assert_eq!(a.answer, TurnAnswer::Yes);
        let a: AnswerRequest = serde_json::from_str(r#"{"answer": "no"}"#).unwrap();
        assert_eq!(a.answer, TurnAnswer::No);
        assert!(serde_json::from_str::<AnswerRequest>(r#"{"answer": "maybe"}"#).is_err());
        assert!(serde_json::from_str::<AnswerRequest>(r#"{"answer": "YES", "x": 1}"#).is_err());
    }

    #[test]
    fn predict_request_defaults() {
        let r: PredictRequest = serde_json::from_str(r#"{"document": "d", "question": "q"}"#).unwrap();
        assert!(r.scenario.is_empty() && r.history.is_empty());
    }
}
