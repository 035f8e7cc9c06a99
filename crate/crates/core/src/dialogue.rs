//! Interactive dialogue sessions: decide, ask on MORE, close on a terminal
//! decision, the turn cap, or a repeated question.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{DecisionLabel, HistoryTurn, TurnAnswer};
use crate::error::{Error, Result};
use crate::pipeline::{DecisionMaker, Prediction};
use crate::qgen::{generate, QuestionGenerator};
use crate::text::normalize_question;

pub const DEFAULT_TURN_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    AwaitingAnswer,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CloseReason {
    Decision,
    TurnCap,
    RepeatedQuestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeView {
    pub decision: DecisionLabel,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Session wire form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub document: String,
    pub question: String,
    pub scenario: String,
    pub history: Vec<HistoryTurn>,
    pub asked_questions: Vec<String>,
    pub status: SessionStatus,
    /// Final decision once closed.
    pub decision: Option<DecisionLabel>,
    pub pending_question: Option<String>,
    pub close_reason: Option<CloseReason>,
    pub turn_cap: usize,
    pub last_outcome: OutcomeView,
    pub attention: Vec<f64>,
    pub alignment: Vec<Vec<f64>>,
    pub hypotheses: Vec<String>,
    /// Number of decisions run for this session.
    pub predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    pub document: String,
    pub question: String,
    #[serde(default)]
    pub scenario: String,
}

pub struct DialogueEngine {
    decider: Arc<dyn DecisionMaker>,
    generator: Arc<dyn QuestionGenerator>,
    turn_cap: usize,
}

impl DialogueEngine {
    pub fn new(decider: Arc<dyn DecisionMaker>, generator: Arc<dyn QuestionGenerator>, turn_cap: usize) -> Self {
        Self {
            decider,
            generator,
            turn_cap,
        }
    }

    pub fn turn_cap(&self) -> usize {
        self.turn_cap
    }

    pub fn start(&self, session_id: String, request: &CreateSession) -> Result<SessionState> {
        if request.document.trim().is_empty() {
            return Err(Error::validation("document is empty"));
        }
        if request.question.trim().is_empty() {
            return Err(Error::validation("question is empty"));
        }
        let prediction = self.decider.decide(&request.document, &request.question, &request.scenario, &[])?;
        let mut state = SessionState {
            session_id,
            document: request.document.clone(),
            question: request.question.clone(),
            scenario: request.scenario.clone(),
            history: Vec::new(),
            asked_questions: Vec::new(),
            status: SessionStatus::AwaitingAnswer,
            decision: None,
            pending_question: None,
            close_reason: None,
            turn_cap: self.turn_cap,
            last_outcome: outcome_view(&prediction),
            attention: Vec::new(),
            alignment: Vec::new(),
            hypotheses: Vec::new(),
            predictions: 0,
        };
        self.advance(&mut state, prediction)?;
        Ok(state)
    }

    /// Records the answer to the pending question and decides again. The
    /// state is left untouched when an error is returned.
    pub fn answer(&self, state: &SessionState, answer: TurnAnswer) -> Result<SessionState> {
        let pending = match (&state.status, &state.pending_question) {
            (SessionStatus::AwaitingAnswer, Some(q)) => q.clone(),
            _ => {
                return Err(Error::SessionConflict(state.session_id.clone()))
            }
        };
        let mut next = state.clone();
        next.history.push(HistoryTurn::new(pending, answer));
        next.pending_question = None;
        let prediction = self
            .decider
            .decide(&next.document, &next.question, &next.scenario, &next.history)?;
        self.advance(&mut next, prediction)?;
        Ok(next)
    }

    fn advance(&self, state: &mut SessionState, prediction: Prediction) -> Result<()> {
        state.predictions += 1;
        state.last_outcome = outcome_view(&prediction);
        state.attention = prediction.attention.clone();
        state.alignment = prediction.alignment.clone();
        state.hypotheses = prediction.hypotheses.clone();
        if prediction.decision.is_terminal() {
            close(state, prediction.decision, CloseReason::Decision);
            return Ok(());
        }
        if state.history.len() >= self.turn_cap {
            close(state, prediction.best_terminal(), CloseReason::TurnCap);
            return Ok(());
        }
        let question = generate(&state.document, &state.asked_questions, self.generator.as_ref())?;
        let key = normalize_question(&question);
        if state.asked_questions.iter().any(|q| normalize_question(q) == key) {
            close(state, prediction.best_terminal(), CloseReason::RepeatedQuestion);
            return Ok(());
        }
        state.asked_questions.push(question.clone());
        state.pending_question = Some(question);
        state.status = SessionStatus::AwaitingAnswer;
        Ok(())
    }
}

fn outcome_view(p: &Prediction) -> OutcomeView {
    OutcomeView {
        decision: p.decision,
        logits: p.logits.clone(),
        probabilities: p.probabilities.clone(),
    }
}

fn close(state: &mut SessionState, decision: DecisionLabel, reason: CloseReason) {
    state.status = SessionStatus::Closed;
    state.decision = Some(decision);
    state.pending_question = None;
    state.close_reason = Some(reason);
}

/// In-process session store. Each session sits behind its own mutex so
/// operations on one session are serialized while others proceed.
pub struct SessionStore {
    engine: DialogueEngine,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    persist_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(engine: DialogueEngine) -> Self {
        Self {
            engine,
            sessions: RwLock::new(HashMap::new()),
            persist_dir: None,
        }
    }

    /// Also writes every session to `<dir>/<session_id>.json` and reads
    /// sessions back from there when they are not in memory.
    pub fn with_persistence(mut self, dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.persist_dir = Some(dir);
        Ok(self)
    }

    pub fn engine(&self) -> &DialogueEngine {
        &self.engine
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, state: &SessionState) -> Result<()> {
        if let Some(dir) = &self.persist_dir {
            let path = dir.join(format!("{}.json", state.session_id));
            let tmp = dir.join(format!("{}.json.tmp", state.session_id));
            std::fs::write(&tmp, serde_json::to_vec_pretty(state)?).map_err(|e| Error::io(&tmp, e))?;
            std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn valid_id(id: &str) -> bool {
        !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<SessionState>>> {
        if let Some(slot) = self.sessions.read().expect("session map poisoned").get(id) {
            return Ok(slot.clone());
        }
        let not_found = || Error::SessionNotFound(id.to_string());
        let dir = self.persist_dir.as_ref().filter(|_| Self::valid_id(id)).ok_or_else(not_found)?;
        let path = dir.join(format!("{id}.json"));
        let bytes = std::fs::read(&path).map_err(|_| not_found())?;
        let state: SessionState = serde_json::from_slice(&bytes)?;
        let mut map = self.sessions.write().expect("session map poisoned");
        Ok(map.entry(id.to_string()).or_insert_with(|| Arc::new(Mutex::new(state))).clone())
    }

    pub fn create(&self, request: &CreateSession) -> Result<SessionState> {
        let id = uuid::Uuid::new_v4().to_string();
        let state = self.engine.start(id.clone(), request)?;
        self.persist(&state)?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, Arc::new(Mutex::new(state.clone())));
        Ok(state)
    }

    pub fn get(&self, id: &str) -> Result<SessionState> {
        let slot = self.slot(id)?;
        let state = slot.lock().expect("session poisoned").clone();
        Ok(state)
    }

    pub fn answer(&self, id: &str, answer: TurnAnswer) -> Result<SessionState> {
        let slot = self.slot(id)?;
        let mut guard = slot.lock().expect("session poisoned");
        let next = self.engine.answer(&guard, answer)?;
        self.persist(&next)?;
        *guard = next.clone();
        Ok(next)
    }
}
