//! Splits rule documents into hypothesis units and user information
//! (scenario + dialogue turns) into premise units.

use serde::{Deserialize, Serialize};

use crate::corpus::{bullet_marker_len, HistoryTurn};
use crate::error::{Error, Result};

/// A document unit. `span` holds byte offsets into the source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub index: usize,
    pub text: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PremiseSource {
    Scenario,
    Turn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Premise {
    pub index: usize,
    pub text: String,
    pub source: PremiseSource,
    /// Index into the dialogue history; set only for turn premises.
    pub turn_ref: Option<usize>,
    /// The turn's answer, kept for weak labelling.
    #[serde(skip)]
    pub answer: Option<crate::corpus::TurnAnswer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterDescriptor {
    pub name: String,
    pub version: String,
}

/// A deterministic document segmenter.
pub trait Segmenter: Send + Sync {
    fn descriptor(&self) -> SegmenterDescriptor;

    /// Returns ordered, non-overlapping byte spans of the units of `document`.
    fn unit_spans(&self, document: &str) -> Vec<(usize, usize)>;
}

/// Rule-based segmenter: list items, then sentences, then subordinate clauses.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSegmenter;

impl Segmenter for RuleSegmenter {
    fn descriptor(&self) -> SegmenterDescriptor {
        SegmenterDescriptor {
            name: "rule".into(),
            version: "1".into(),
        }
    }

    fn unit_spans(&self, document: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        for (line_start, line) in lines_with_offsets(document) {
            let lead = line.len() - line.trim_start().len();
            let body = &line[lead..];
            let body_start = line_start + lead;
            let (content_start, content) = match bullet_marker_len(body) {
                Some(marker) => (body_start + marker, &body[marker..]),
                None => (body_start, body),
            };
            for (s, e) in sentence_spans(content) {
                for (cs, ce) in clause_spans(&content[s..e]) {
                    spans.push((content_start + s + cs, content_start + s + ce));
                }
            }
        }
        spans
    }
}

fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split('\n').map(move |line| {
        let start = offset;
        offset += line.len() + 1;
        (start, line.trim_end_matches('\r'))
    })
}

pub fn segment_document(document: &str, segmenter: &dyn Segmenter) -> Result<Vec<Hypothesis>> {
    if document.trim().is_empty() {
        return Err(Error::validation("document is empty"));
    }
    let mut spans = segmenter.unit_spans(document);
    if spans.is_empty() {
        let start = document.len() - document.trim_start().len();
        spans.push((start, start + document.trim().len()));
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, (s, e))| Hypothesis {
            index,
            text: document[s..e].to_string(),
            span: (s, e),
        })
        .collect())
}

const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "etc.", "mr.", "mrs.", "ms.", "dr.", "no.", "nos.", "st.", "vs.", "inc.", "ltd.",
    "co.", "approx.", "a.m.", "p.m.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.",
    "sep.", "sept.", "oct.", "nov.", "dec.", "u.k.", "u.s.", "prof.", "rev.", "sgt.", "capt.", "jr.", "sr.",
    "dept.", "ref.", "hrs.",
];

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(['(', '"', '\'']);
    let lower = w.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single-letter initials such as "J."
    let mut chars = w.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

/// Sentence spans (byte offsets, trimmed) within `text`. Newlines always end a sentence.
pub(crate) fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c == '\n' {
            push_trimmed(text, start, pos, &mut spans);
            start = pos + 1;
        } else if matches!(c, '.' | '!' | '?') {
            // absorb closing quotes/brackets and repeated terminators
            let mut end_k = k + 1;
            while end_k < chars.len() && matches!(chars[end_k].1, '.' | '!' | '?' | '"' | '\'' | ')' | '”' | '’') {
                end_k += 1;
            }
            let end = chars.get(end_k).map_or(text.len(), |&(p, _)| p);
            let followed_by_space = end_k >= chars.len() || chars[end_k].1.is_whitespace();
            if followed_by_space {
                let next = chars[end_k..].iter().find(|(_, ch)| !ch.is_whitespace()).map(|&(_, ch)| ch);
                let starts_new = match next {
                    None => true,
                    Some(ch) => ch.is_uppercase() || ch.is_ascii_digit() || matches!(ch, '"' | '\'' | '(' | '“' | '*' | '-' | '•'),
                };
                let word_start = text[..pos].rfind(char::is_whitespace).map_or(0, |p| p + 1);
                let word = &text[word_start..end];
                let word = word.trim_end_matches(['"', '\'', ')', '”', '’']);
                if starts_new && !(c == '.' && is_abbreviation(word)) {
                    push_trimmed(text, start, end, &mut spans);
                    start = end;
                }
            }
            k = end_k;
            continue;
        }
        k += 1;
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

const CLAUSE_MARKERS: &[&str] = &["if", "unless", "when", "whether", "provided", "as long as"];
const CLAUSE_SUBJECTS: &[&str] = &[
    "you", "you're", "you've", "you'll", "your", "they", "they're", "their", "he", "she", "we", "it",
];
const MIN_UNIT_WORDS: usize = 2;

/// Word spans (byte offsets) of `text`, splitting on whitespace.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

fn bare(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase().replace('\u{2019}', "'")
}

/// Splits a sentence into clause units at subordinate markers, at
/// "and/or" introducing a new subject, after a colon, and after the comma
/// closing a fronted conditional.
fn clause_spans(sentence: &str) -> Vec<(usize, usize)> {
    let words = word_spans(sentence);
    if words.is_empty() {
        return Vec::new();
    }
    let lower: Vec<String> = words.iter().map(|&(s, e)| bare(&sentence[s..e])).collect();
    let mut cuts = Vec::new();
    let mut unit_first = 0;
    let mut unit_is_conditional = CLAUSE_MARKERS.contains(&lower[0].as_str());
    for w in 1..words.len() {
        let prev_raw = &sentence[words[w - 1].0..words[w - 1].1];
        let words_in_unit = w - unit_first;
        let remaining = words.len() - w;
        let mut cut = false;
        let list_head = prev_raw.ends_with(':');
        let clause_comma = unit_is_conditional && prev_raw.ends_with(',') && words_in_unit >= 2;
        if (list_head || clause_comma) && remaining >= 2 {
            cut = true;
        } else if words_in_unit >= MIN_UNIT_WORDS && remaining >= 2 {
            let here = lower[w].as_str();
            let next = lower.get(w + 1).map(String::as_str).unwrap_or("");
            let is_marker = CLAUSE_MARKERS.contains(&here)
                || (here == "as" && next == "long" && lower.get(w + 2).map(String::as_str) == Some("as"));
            let is_coordination = matches!(here, "and" | "or" | "but") && CLAUSE_SUBJECTS.contains(&next);
            // "whether or not", "if so" and the like stay attached
            let attached = matches!(next, "so" | "not" | "applicable" | "any" | "possible");
            if (is_marker || is_coordination) && !attached {
                cut = true;
            }
        }
        if cut {
            cuts.push(w);
            unit_first = w;
            unit_is_conditional = CLAUSE_MARKERS.contains(&lower[w].as_str());
        }
    }
    let mut spans = Vec::new();
    let mut first = 0;
    for &c in cuts.iter().chain(std::iter::once(&words.len())) {
        let start = words[first].0;
        let end = words[c - 1].1;
        let text = sentence[start..end].trim_end_matches([',', ';']);
        spans.push((start, start + text.len()));
        first = c;
    }
    spans
}

/// Splits scenario text into sentences; empty input gives an empty list.
pub fn segment_scenario(scenario: &str) -> Vec<String> {
    sentence_spans(scenario)
        .into_iter()
        .map(|(s, e)| scenario[s..e].to_string())
        .collect()
}

pub fn format_turn(turn: &HistoryTurn) -> String {
    format!(
        "System: {} Client: {}",
        turn.follow_up_question.trim(),
        turn.follow_up_answer.word()
    )
}

/// Scenario sentences first, then one premise per dialogue turn.
pub fn build_premise_set(scenario_sentences: &[String], turns: &[HistoryTurn]) -> Vec<Premise> {
    let scenario = scenario_sentences.iter().map(|s| (s.clone(), PremiseSource::Scenario, None, None));
    let dialogue = turns
        .iter()
        .enumerate()
        .map(|(t, turn)| (format_turn(turn), PremiseSource::Turn, Some(t), Some(turn.follow_up_answer)));
    scenario
        .chain(dialogue)
        .enumerate()
        .map(|(index, (text, source, turn_ref, answer))| Premise {
            index,
            text,
            source,
            turn_ref,
            answer,
        })
        .collect()
}

/// Hypotheses and premises for one dialogue state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedDialogue {
    pub hypotheses: Vec<Hypothesis>,
    pub premises: Vec<Premise>,
}

pub fn segment_dialogue(
    document: &str,
    scenario: &str,
    history: &[HistoryTurn],
    segmenter: &dyn Segmenter,
) -> Result<SegmentedDialogue> {
    Ok(SegmentedDialogue {
        hypotheses: segment_document(document, segmenter)?,
        premises: build_premise_set(&segment_scenario(scenario), history),
    })
}
