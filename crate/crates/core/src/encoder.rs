//! Marked input construction and per-unit vector selection.
//!
//! Layout: `[H] D1 … [H] Dm [SEP] [CLS] Q [CLS] U1 … [CLS] Un`. The vector
//! at each `[H]` represents a hypothesis, the first `[CLS]` the initial
//! question, and each further `[CLS]` one premise.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::{Hypothesis, Premise};
use crate::text::{fnv1a, tokenize};

pub const HYPOTHESIS_MARKER: &str = "[H]";
pub const CLS_MARKER: &str = "[CLS]";
pub const SEP_MARKER: &str = "[SEP]";
pub const DEFAULT_MAX_LENGTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedInput {
    pub tokens: Vec<String>,
    pub hypothesis_markers: Vec<usize>,
    pub question_marker: usize,
    pub premise_markers: Vec<usize>,
    /// Trailing hypotheses removed to fit `max_length`.
    pub dropped_hypotheses: usize,
}

impl MarkedInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn hypothesis_count(&self) -> usize {
        self.hypothesis_markers.len()
    }

    pub fn premise_count(&self) -> usize {
        self.premise_markers.len()
    }

    /// Token range (exclusive of the marker) owned by the marker at `pos`.
    pub fn segment_after(&self, pos: usize) -> std::ops::Range<usize> {
        let end = self.tokens[pos + 1..]
            .iter()
            .position(|t| is_marker(t))
            .map_or(self.tokens.len(), |k| pos + 1 + k);
        pos + 1..end
    }
}

pub fn is_marker(token: &str) -> bool {
    matches!(token, HYPOTHESIS_MARKER | CLS_MARKER | SEP_MARKER)
}

/// A text encoder producing one `d`-dimensional row per input token.
pub trait TextEncoder: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn max_length(&self) -> usize;
    fn encode_tokens(&self, marked: &MarkedInput) -> Array2<f64>;
}

pub fn build_input(
    hypotheses: &[Hypothesis],
    question: &str,
    premises: &[Premise],
    max_length: usize,
) -> Result<MarkedInput> {
    if hypotheses.is_empty() {
        return Err(Error::validation("at least one hypothesis is required"));
    }
    if question.trim().is_empty() {
        return Err(Error::validation("question is empty"));
    }
    let mut hyp_segments: Vec<Vec<String>> = hypotheses.iter().map(|h| tokenize(&h.text)).collect();
    let mut question_tokens = tokenize(question);
    let mut premise_segments: Vec<Vec<String>> = premises.iter().map(|p| tokenize(&p.text)).collect();

    let n = premises.len();
    let total = |h: &[Vec<String>], q: &[String], p: &[Vec<String>]| {
        h.len() + h.iter().map(Vec::len).sum::<usize>() + 2 + q.len() + p.len() + p.iter().map(Vec::len).sum::<usize>()
    };
    let mut excess = total(&hyp_segments, &question_tokens, &premise_segments).saturating_sub(max_length);

    // premise content first, from the back, then question content
    for seg in premise_segments.iter_mut().rev() {
        let cut = excess.min(seg.len());
        seg.truncate(seg.len() - cut);
        excess -= cut;
    }
    let cut = excess.min(question_tokens.len());
    question_tokens.truncate(question_tokens.len() - cut);
    excess -= cut;

    let mut dropped = 0;
    while excess > 0 && hyp_segments.len() > 1 {
        let seg = hyp_segments.pop().expect("len > 1");
        excess = excess.saturating_sub(seg.len() + 1);
        dropped += 1;
    }
    if excess > 0 {
        let seg = &mut hyp_segments[0];
        let cut = excess.min(seg.len());
        seg.truncate(seg.len() - cut);
        excess -= cut;
    }
    if excess > 0 {
        return Err(Error::validation(format!(
            "max_length {max_length} cannot hold the {} required markers",
            n + 3
        )));
    }
    if dropped > 0 {
        tracing::warn!(dropped, max_length, "hypotheses exceed max_length; trailing units dropped");
    }

    let mut tokens = Vec::new();
    let mut hypothesis_markers = Vec::with_capacity(hyp_segments.len());
    for seg in hyp_segments {
        hypothesis_markers.push(tokens.len());
        tokens.push(HYPOTHESIS_MARKER.to_string());
        tokens.extend(seg);
    }
    tokens.push(SEP_MARKER.to_string());
    let question_marker = tokens.len();
    tokens.push(CLS_MARKER.to_string());
    tokens.extend(question_tokens);
    let mut premise_markers = Vec::with_capacity(n);
    for seg in premise_segments {
        premise_markers.push(tokens.len());
        tokens.push(CLS_MARKER.to_string());
        tokens.extend(seg);
    }
    Ok(MarkedInput {
        tokens,
        hypothesis_markers,
        question_marker,
        premise_markers,
        dropped_hypotheses: dropped,
    })
}

/// Vectors selected at the marker positions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDialogue {
    /// m × d
    pub hypotheses: Array2<f64>,
    /// d
    pub question: Array1<f64>,
    /// n × d
    pub premises: Array2<f64>,
}

impl EncodedDialogue {
    pub fn dim(&self) -> usize {
        self.question.len()
    }

    pub fn m(&self) -> usize {
        self.hypotheses.nrows()
    }

    pub fn n(&self) -> usize {
        self.premises.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.hypotheses.iter().chain(self.question.iter()).chain(self.premises.iter()).all(|x| x.is_finite())
    }
}

pub fn select_rows(marked: &MarkedInput, rows: &Array2<f64>) -> Result<EncodedDialogue> {
    if rows.nrows() != marked.len() {
        return Err(Error::Internal(format!(
            "encoder returned {} rows for a {}-token input",
            rows.nrows(),
            marked.len()
        )));
    }
    Ok(EncodedDialogue {
        hypotheses: rows.select(Axis(0), &marked.hypothesis_markers),
        question: rows.row(marked.question_marker).to_owned(),
        premises: rows.select(Axis(0), &marked.premise_markers),
    })
}

pub fn encode(marked: &MarkedInput, encoder: &dyn TextEncoder) -> Result<EncodedDialogue> {
    let rows = encoder.encode_tokens(marked);
    select_rows(marked, &rows)
}

/// Desk-scale encoder: each token maps to a seeded pseudo-random unit
/// vector; a marker row mixes its own vector with the mean of the tokens in
/// its segment. A per-dimension affine layer (`scale`, `shift`) on top is the
/// only trainable part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    pub seed: u64,
    pub dim: usize,
    pub max_length: usize,
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

impl ToyEncoder {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::validation("toy encoder dimension must be at least 2"));
        }
        Ok(Self {
            seed,
            dim,
            max_length: DEFAULT_MAX_LENGTH,
            scale: Array1::ones(dim),
            shift: Array1::zeros(dim),
        })
    }

    pub fn with_max_length(mut self, max_length: usize) -> Self {
        self.max_length = max_length;
        self
    }

    pub fn token_vector(&self, token: &str) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed.rotate_left(17));
        let mut v: Array1<f64> = Array1::from_shape_fn(self.dim, |_| rng.random_range(-1.0..1.0));
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        v
    }

    /// Rows before the affine layer.
    pub fn raw_rows(&self, marked: &MarkedInput) -> Array2<f64> {
        let mut rows = Array2::zeros((marked.len(), self.dim));
        for (k, tok) in marked.tokens.iter().enumerate() {
            let mut v = self.token_vector(tok);
            if is_marker(tok) && tok != SEP_MARKER {
                let seg = marked.segment_after(k);
                if !seg.is_empty() {
                    let mut mean = Array1::<f64>::zeros(self.dim);
                    for t in &marked.tokens[seg.clone()] {
                        mean += &self.token_vector(t);
                    }
                    mean /= seg.len() as f64;
                    v = v * 0.5 + mean;
                }
            }
            rows.row_mut(k).assign(&v);
        }
        rows
    }

    /// Selected vectors before the affine layer; used for training.
    pub fn encode_raw(&self, marked: &MarkedInput) -> Result<EncodedDialogue> {
        select_rows(marked, &self.raw_rows(marked))
    }

    pub fn apply_affine(&self, raw: &EncodedDialogue) -> EncodedDialogue {
        let f = |m: &Array2<f64>| m * &self.scale + &self.shift;
        EncodedDialogue {
            hypotheses: f(&raw.hypotheses),
            question: &raw.question * &self.scale + &self.shift,
            premises: f(&raw.premises),
        }
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.dim
    }
}

impl TextEncoder for ToyEncoder {
    fn name(&self) -> String {
        format!("toy:{}:{}", self.seed, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_length(&self) -> usize {
        self.max_length
    }

    fn encode_tokens(&self, marked: &MarkedInput) -> Array2<f64> {
        self.raw_rows(marked) * &self.scale + &self.shift
    }
}

/// Parses `toy:<seed>:<d>`.
pub fn encoder_by_name(name: &str) -> Result<ToyEncoder> {
    let parts: Vec<&str> = name.split(':').collect();
    match parts.as_slice() {
        ["toy", seed, dim] => {
            let seed = seed.parse().map_err(|_| Error::Config(format!("bad seed in `{name}`")))?;
            let dim = dim.parse().map_err(|_| Error::Config(format!("bad dimension in `{name}`")))?;
            ToyEncoder::new(seed, dim)
        }
        _ => Err(Error::Config(format!("unknown encoder `{name}` (expected toy:<seed>:<d>)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{HistoryTurn, TurnAnswer};
    use crate::segmenter::build_premise_set;

    fn hyps(n: usize) -> Vec<Hypothesis> {
        (0..n)
            .map(|i| Hypothesis {
                index: i,
                text: format!("condition number {i} holds"),
                span: (0, 0),
            })
            .collect()
    }

    fn premises(n: usize) -> Vec<Premise> {
        let sentences: Vec<String> = (0..n).map(|i| format!("I satisfy item {i}.")).collect();
        build_premise_set(&sentences, &[])
    }

    fn count(m: &MarkedInput, tok: &str) -> usize {
        m.tokens.iter().filter(|t| *t == tok).count()
    }

    #[test]
    fn marker_layout() {
        let m = build_input(&hyps(3), "Can I apply?", &premises(2), 512).unwrap();
        assert_eq!(count(&m, HYPOTHESIS_MARKER), 3);
        assert_eq!(count(&m, CLS_MARKER), 3);
        assert_eq!(count(&m, SEP_MARKER), 1);
        assert_eq!(m.tokens[0], HYPOTHESIS_MARKER);
        let sep = m.tokens.iter().position(|t| t == SEP_MARKER).unwrap();
        assert!(m.hypothesis_markers.iter().all(|&p| p < sep));
        assert_eq!(m.question_marker, sep + 1);
        assert!(m.premise_markers.iter().all(|&p| p > m.question_marker));
        assert!(m.premise_markers.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn no_premises() {
        let m = build_input(&hyps(2), "Can I apply?", &[], 512).unwrap();
        assert_eq!(count(&m, HYPOTHESIS_MARKER), 2);
        assert_eq!(count(&m, CLS_MARKER), 1);
        assert_eq!(count(&m, SEP_MARKER), 1);
        assert!(m.premise_markers.is_empty());
    }

    #[test]
    fn empty_question_rejected() {
        assert!(build_input(&hyps(1), "  ", &[], 512).is_err());
    }

    #[test]
    fn truncation_keeps_markers_and_drops_premise_tail_first() {
        let h = hyps(2);
        let p = premises(3);
        let full = build_input(&h, "Can I apply?", &p, 10_000).unwrap();
        let limit = full.len() - 5;
        let cut = build_input(&h, "Can I apply?", &p, limit).unwrap();
        assert_eq!(cut.len(), limit);
        assert_eq!(cut.hypothesis_count(), 2);
        assert_eq!(cut.premise_count(), 3);
        // hypothesis side untouched
        assert_eq!(cut.tokens[..cut.question_marker], full.tokens[..full.question_marker]);
        // the last premise lost its content first
        let last = *cut.premise_markers.last().unwrap();
        assert_eq!(cut.segment_after(last).len(), full.segment_after(*full.premise_markers.last().unwrap()).len() - 5);
    }

    #[test]
    fn truncation_drops_trailing_hypotheses_last() {
        let h = hyps(4);
        let m = build_input(&h, "Can I apply?", &premises(2), 14).unwrap();
        assert!(m.len() <= 14);
        assert!(m.dropped_hypotheses > 0);
        assert_eq!(m.hypothesis_count() + m.dropped_hypotheses, 4);
        assert_eq!(m.premise_count(), 2);
        assert!(build_input(&h, "Q?", &premises(2), 4).is_err());
    }

    #[test]
    fn toy_shapes_and_determinism() {
        let enc = ToyEncoder::new(7, 8).unwrap();
        let turns = vec![HistoryTurn::new("Are you employed?", TurnAnswer::Yes)];
        let p = build_premise_set(&["I work.".to_string()], &turns);
        let m = build_input(&hyps(3), "Can I apply?", &p, 512).unwrap();
        let a = encode(&m, &enc).unwrap();
        assert_eq!(a.hypotheses.dim(), (3, 8));
        assert_eq!(a.question.len(), 8);
        assert_eq!(a.premises.dim(), (2, 8));
        assert!(a.is_finite());
        assert_eq!(a, encode(&m, &enc).unwrap());
        let other = ToyEncoder::new(8, 8).unwrap();
        assert_ne!(a, encode(&m, &other).unwrap());
    }

    #[test]
    fn toy_rows_for_four_tokens() {
        let enc = ToyEncoder::new(1, 8).unwrap();
        let marked = MarkedInput {
            tokens: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            hypothesis_markers: vec![],
            question_marker: 0,
            premise_markers: vec![],
            dropped_hypotheses: 0,
        };
        let rows = enc.encode_tokens(&marked);
        assert_eq!(rows.dim(), (4, 8));
        assert!(rows.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn row_count_mismatch_is_internal_error() {
        let m = build_input(&hyps(1), "Q?", &[], 512).unwrap();
        let rows = Array2::zeros((m.len() + 1, 4));
        assert!(matches!(select_rows(&m, &rows), Err(Error::Internal(_))));
    }

    #[test]
    fn encoder_names() {
        let e = encoder_by_name("toy:3:16").unwrap();
        assert_eq!((e.seed, e.dim), (3, 16));
        assert_eq!(e.name(), "toy:3:16");
        assert!(encoder_by_name("deberta").is_err());
        assert!(encoder_by_name("toy:1:1").is_err());
    }
}
