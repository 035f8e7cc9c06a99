//! Follow-up question generation.
//!
//! Generation inputs are built from the whole document and the questions
//! already asked; the scenario is not part of the input. Two generators ship
//! here: a template rewriter that needs no training data, and a retrieval
//! generator fitted on generation instances.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DecisionLabel, DialogueInstance};
use crate::error::{Error, Result};
use crate::segmenter::{segment_document, RuleSegmenter, Segmenter};
use crate::text::{content_words, normalize_question};
use crate::weak_labels::{cosine_similarity, EmbeddingOracle, HashedBagOfWords};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationInstance {
    pub document: String,
    pub asked_questions: Vec<String>,
    pub target_question: String,
}

/// `document: {D} asked: {f1} | {f2} | …`
pub fn build_generation_input(document: &str, asked_questions: &[String]) -> String {
    let mut out = format!("document: {document} asked:");
    if !asked_questions.is_empty() {
        out.push(' ');
        out.push_str(&asked_questions.join(" | "));
    }
    out
}

fn asked_of(instance: &DialogueInstance) -> Vec<String> {
    instance.history.iter().map(|t| t.follow_up_question.clone()).collect()
}

/// One instance per MORE-labelled dialogue; the target is the gold answer.
pub fn natural_generation_set(train: &[DialogueInstance]) -> Vec<GenerationInstance> {
    train
        .iter()
        .filter(|i| i.gold_decision == DecisionLabel::More)
        .map(|i| GenerationInstance {
            document: i.document.clone(),
            asked_questions: asked_of(i),
            target_question: i.gold_answer.clone(),
        })
        .collect()
}

/// History reduction: terminal dialogues with at least one turn yield the
/// last asked question as target and the earlier ones as context.
pub fn augment(train: &[DialogueInstance]) -> Vec<GenerationInstance> {
    train
        .iter()
        .filter(|i| i.gold_decision != DecisionLabel::More && !i.history.is_empty())
        .map(|i| {
            let mut asked = asked_of(i);
            let target = asked.pop().unwrap_or_default();
            GenerationInstance {
                document: i.document.clone(),
                asked_questions: asked,
                target_question: target,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct TrainingRecord<'a> {
    input_text: String,
    target_text: &'a str,
}

/// JSON lines of `{input_text, target_text}`.
pub fn write_training_file(path: &Path, instances: &[GenerationInstance]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for inst in instances {
        let record = TrainingRecord {
            input_text: build_generation_input(&inst.document, &inst.asked_questions),
            target_text: &inst.target_question,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub trait QuestionGenerator: Send + Sync {
    fn name(&self) -> &str;
    /// Upper bound on generated words.
    fn max_output_length(&self) -> usize;
    fn generate_raw(&self, document: &str, asked_questions: &[String]) -> Result<String>;
}

/// Runs the generator and normalizes its output into a question.
pub fn generate(document: &str, asked_questions: &[String], generator: &dyn QuestionGenerator) -> Result<String> {
    let raw = generator
        .generate_raw(document, asked_questions)
        .map_err(|e| Error::Generation(format!("{}: {e}", generator.name())))?;
    let words: Vec<&str> = raw.split_whitespace().take(generator.max_output_length().max(1)).collect();
    let mut question = words.join(" ");
    if question.trim_matches(|c: char| c.is_ascii_punctuation()).is_empty() {
        return Err(Error::Generation(format!("{} produced an empty question", generator.name())));
    }
    if !question.ends_with('?') {
        question = question.trim_end_matches(['.', ',', ';', ':', '!']).to_string();
        question.push('?');
    }
    Ok(question)
}

const LEADING_CONNECTIVES: &[&str] = &[
    "as long as", "provided that", "provided", "if", "unless", "when", "whether", "and", "or", "but", "that",
];

const AUXILIARIES: &[(&str, &str)] = &[
    ("you are ", "Are you "),
    ("you were ", "Were you "),
    ("you have been ", "Have you been "),
    ("you can ", "Can you "),
    ("you will ", "Will you "),
    ("you could ", "Could you "),
    ("you should ", "Should you "),
    ("you must ", "Do you "),
    ("you need to ", "Do you need to "),
    ("you've ", "Have you "),
    ("you're ", "Are you "),
    ("it is ", "Is it "),
    ("there is ", "Is there "),
    ("there are ", "Are there "),
];

const IRREGULAR_PARTICIPLES: &[&str] = &[
    "paid", "made", "had", "got", "done", "told", "sent", "left", "kept", "held", "lost", "spent", "sold", "bought",
    "brought", "built", "met", "read", "run", "won",
];

fn strip_connectives(text: &str) -> String {
    let mut s = text.trim().to_string();
    loop {
        let lower = s.to_lowercase();
        let Some(cut) = LEADING_CONNECTIVES.iter().find_map(|c| {
            lower
                .strip_prefix(c)
                .filter(|rest| rest.starts_with(' ') || rest.starts_with(','))
                .map(|_| c.len())
        }) else {
            return s;
        };
        s = s[cut..].trim_start_matches([' ', ',']).to_string();
    }
}

/// Rewrites a declarative condition into a yes/no question.
pub fn condition_to_question(hypothesis: &str) -> String {
    let clause = strip_connectives(hypothesis);
    let clause = clause.trim_end_matches(['.', ',', ';', ':', '?', '!']).trim();
    let mut chars = clause.chars();
    let lowered: String = match chars.next() {
        Some(first) if clause.starts_with("You") || clause.starts_with("Your") || clause.starts_with("It ") || clause.starts_with("There ") => {
            first.to_lowercase().chain(chars).collect()
        }
        _ => clause.to_string(),
    };
    for (prefix, lead) in AUXILIARIES {
        if let Some(rest) = lowered.strip_prefix(prefix) {
            return format!("{lead}{rest}?");
        }
    }
    if let Some(rest) = lowered.strip_prefix("you have ") {
        let participle = rest
            .split_whitespace()
            .next()
            .is_some_and(|w| w.ends_with("ed") || w.ends_with("en") || IRREGULAR_PARTICIPLES.contains(&w));
        return if participle {
            format!("Have you {rest}?")
        } else {
            format!("Do you have {rest}?")
        };
    }
    if let Some(rest) = lowered.strip_prefix("you ") {
        return format!("Do you {rest}?");
    }
    if let Some(rest) = lowered.strip_prefix("your ") {
        if let Some((subject, tail)) = rest.split_once(" is ") {
            return format!("Is your {subject} {tail}?");
        }
        if let Some((subject, tail)) = rest.split_once(" are ") {
            return format!("Are your {subject} {tail}?");
        }
    }
    format!("Does this apply to you: {lowered}?")
}

fn covered(unit: &str, asked: &[String]) -> bool {
    let words = content_words(unit);
    if words.is_empty() {
        return true;
    }
    asked.iter().any(|q| {
        let q_words = content_words(q);
        let shared = words.iter().filter(|w| q_words.contains(w)).count();
        shared * 2 >= words.len()
    })
}

/// Rewrites the first document unit not yet covered by an asked question.
///
/// List heads (units ending in `:`) are skipped; conditional clauses come
/// first, then units addressing the reader. When every unit is covered the first candidate is
/// returned again, which the dialogue engine treats as a repeat.
pub struct TemplateGenerator {
    segmenter: Box<dyn Segmenter>,
    max_output_length: usize,
}

impl Default for TemplateGenerator {
    fn default() -> Self {
        Self {
            segmenter: Box::new(RuleSegmenter),
            max_output_length: 64,
        }
    }
}

impl TemplateGenerator {
    pub fn new(segmenter: Box<dyn Segmenter>) -> Self {
        Self {
            segmenter,
            ..Self::default()
        }
    }
}

fn is_condition(text: &str) -> bool {
    let lower = text.trim_start().to_lowercase();
    LEADING_CONNECTIVES
        .iter()
        .any(|c| lower.strip_prefix(c).is_some_and(|rest| rest.starts_with(' ')))
}

fn addresses_reader(text: &str) -> bool {
    crate::text::tokenize(text).iter().any(|t| t == "you" || t == "your")
}

impl QuestionGenerator for TemplateGenerator {
    fn name(&self) -> &str {
        "template"
    }

    fn max_output_length(&self) -> usize {
        self.max_output_length
    }

    fn generate_raw(&self, document: &str, asked_questions: &[String]) -> Result<String> {
        let units = segment_document(document, self.segmenter.as_ref())?;
        let candidates: Vec<&str> = units
            .iter()
            .map(|h| h.text.as_str())
            .filter(|t| !t.trim_end().ends_with(':') && !content_words(t).is_empty())
            .collect();
        let conditions: Vec<&str> = candidates.iter().copied().filter(|t| is_condition(t)).collect();
        let addressed: Vec<&str> = candidates.iter().copied().filter(|t| addresses_reader(t)).collect();
        let pool = [&conditions, &addressed, &candidates]
            .into_iter()
            .find(|p| !p.is_empty())
            .unwrap_or(&candidates);
        let Some(first) = pool.first() else {
            return Err(Error::Generation("document has no unit to ask about".into()));
        };
        let chosen = pool.iter().find(|t| !covered(t, asked_questions)).unwrap_or(first);
        Ok(condition_to_question(chosen))
    }
}

/// Nearest-neighbour generator: returns the target question of the most
/// similar training input, skipping targets already asked. Falls back to the
/// template generator when every neighbour's question has been asked.
pub struct RetrievalGenerator {
    oracle: HashedBagOfWords,
    keys: Vec<Vec<f64>>,
    targets: Vec<String>,
    fallback: TemplateGenerator,
}

impl RetrievalGenerator {
    pub const ORACLE_DIM: usize = 1024;

    pub fn fit(instances: &[GenerationInstance]) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Generation("retrieval generator needs training instances".into()));
        }
        let oracle = HashedBagOfWords::new(Self::ORACLE_DIM)?;
        let keys = instances
            .iter()
            .map(|i| oracle.embed(&build_generation_input(&i.document, &i.asked_questions)))
            .collect();
        Ok(Self {
            oracle,
            keys,
            targets: instances.iter().map(|i| i.target_question.clone()).collect(),
            fallback: TemplateGenerator::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

impl QuestionGenerator for RetrievalGenerator {
    fn name(&self) -> &str {
        "retrieval"
    }

    fn max_output_length(&self) -> usize {
        64
    }

    fn generate_raw(&self, document: &str, asked_questions: &[String]) -> Result<String> {
        let query = self.oracle.embed(&build_generation_input(document, asked_questions));
        let asked: Vec<String> = asked_questions.iter().map(|q| normalize_question(q)).collect();
        let mut best: Option<(f64, usize)> = None;
        for (k, key) in self.keys.iter().enumerate() {
            if asked.contains(&normalize_question(&self.targets[k])) {
                continue;
            }
            let score = cosine_similarity(&query, key);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, k));
            }
        }
        match best {
            Some((_, k)) => Ok(self.targets[k].clone()),
            None => self.fallback.generate_raw(document, asked_questions),
        }
    }
}
