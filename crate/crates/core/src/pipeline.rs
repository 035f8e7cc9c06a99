//! End-to-end prediction: segment, encode, decide, and ask when the
//! decision is MORE.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::predicted_hypothesis_states;
use crate::biae::{forward, BiaeParams};
use crate::checkpoint::Checkpoint;
use crate::corpus::{DecisionLabel, HistoryTurn};
use crate::encoder::{build_input, encode, TextEncoder};
use crate::error::{Error, Result};
use crate::qgen::{generate, QuestionGenerator, TemplateGenerator};
use crate::segmenter::{segment_dialogue, RuleSegmenter, Segmenter};
use crate::weak_labels::EntailmentState;

/// Everything one decision produces, in plain arrays for the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub decision: DecisionLabel,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Attention over hypotheses (length m).
    pub attention: Vec<f64>,
    /// Row-stochastic alignment, m rows of n entries.
    pub alignment: Vec<Vec<f64>>,
    pub hypotheses: Vec<String>,
    pub premises: Vec<String>,
    pub hypothesis_states: Vec<EntailmentState>,
    pub dropped_hypotheses: usize,
    pub follow_up_question: Option<String>,
}

impl Prediction {
    /// Best class among IRRELEVANT, YES and NO by logit.
    pub fn best_terminal(&self) -> DecisionLabel {
        let mut best = DecisionLabel::Irrelevant;
        for label in [DecisionLabel::Yes, DecisionLabel::No] {
            if self.logits[label.index()] > self.logits[best.index()] {
                best = label;
            }
        }
        best
    }
}

/// Produces a decision (without a follow-up question) for a dialogue state.
pub trait DecisionMaker: Send + Sync {
    fn decide(&self, document: &str, question: &str, scenario: &str, history: &[HistoryTurn]) -> Result<Prediction>;
}

pub struct Predictor {
    params: BiaeParams,
    encoder: Arc<dyn TextEncoder>,
    segmenter: Arc<dyn Segmenter>,
    generator: Arc<dyn QuestionGenerator>,
}

impl Predictor {
    pub fn new(
        params: BiaeParams,
        encoder: Arc<dyn TextEncoder>,
        segmenter: Arc<dyn Segmenter>,
        generator: Arc<dyn QuestionGenerator>,
    ) -> Result<Self> {
        if params.dim() != encoder.dim() {
            return Err(Error::Unavailable(format!(
                "parameters have d = {} but encoder `{}` has d = {}",
                params.dim(),
                encoder.name(),
                encoder.dim()
            )));
        }
        Ok(Self {
            params,
            encoder,
            segmenter,
            generator,
        })
    }

    /// Rule segmenter and template generator around a checkpoint.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        Self::from_checkpoint_with(checkpoint, Arc::new(TemplateGenerator::default()))
    }

    pub fn from_checkpoint_with(checkpoint: &Checkpoint, generator: Arc<dyn QuestionGenerator>) -> Result<Self> {
        let params = checkpoint.params().map_err(|e| Error::Unavailable(e.to_string()))?;
        Self::new(params, Arc::new(checkpoint.encoder.clone()), Arc::new(RuleSegmenter), generator)
    }

    pub fn generator(&self) -> &Arc<dyn QuestionGenerator> {
        &self.generator
    }

    /// Decision plus, on MORE, a follow-up question. Previously asked
    /// questions are taken from `history`.
    pub fn predict(&self, document: &str, question: &str, scenario: &str, history: &[HistoryTurn]) -> Result<Prediction> {
        let mut prediction = self.decide(document, question, scenario, history)?;
        if prediction.decision == DecisionLabel::More {
            let asked: Vec<String> = history.iter().map(|t| t.follow_up_question.clone()).collect();
            prediction.follow_up_question = Some(generate(document, &asked, self.generator.as_ref())?);
        }
        Ok(prediction)
    }
}

impl DecisionMaker for Predictor {
    fn decide(&self, document: &str, question: &str, scenario: &str, history: &[HistoryTurn]) -> Result<Prediction> {
        if document.trim().is_empty() {
            return Err(Error::validation("document is empty"));
        }
        if question.trim().is_empty() {
            return Err(Error::validation("question is empty"));
        }
        let seg = segment_dialogue(document, scenario, history, self.segmenter.as_ref())?;
        let marked = build_input(&seg.hypotheses, question, &seg.premises, self.encoder.max_length())?;
        let input = encode(&marked, self.encoder.as_ref())?;
        if !input.is_finite() {
            return Err(Error::Internal("encoder produced non-finite vectors".into()));
        }
        let pass = forward(&self.params, &input);
        let m = input.m();
        Ok(Prediction {
            decision: pass.outcome.decision,
            logits: pass.outcome.logits.to_vec(),
            probabilities: pass.outcome.probabilities.to_vec(),
            attention: pass.outcome.attention.to_vec(),
            alignment: pass.alignment.rows().into_iter().map(|r| r.to_vec()).collect(),
            hypotheses: seg.hypotheses.into_iter().take(m).map(|h| h.text).collect(),
            premises: seg.premises.into_iter().map(|p| p.text).collect(),
            hypothesis_states: predicted_hypothesis_states(&pass.alignment, &pass.entailment),
            dropped_hypotheses: marked.dropped_hypotheses,
            follow_up_question: None,
        })
    }
}
