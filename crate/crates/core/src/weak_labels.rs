//! Weak supervision for the alignment and entailment heads.
//!
//! Each premise is aligned to the hypothesis whose sentence embedding has
//! the highest cosine similarity with it. Entailment labels then follow
//! from the premise kind: a dialogue turn answered "Yes" entails its aligned
//! hypothesis, "No" contradicts it, a scenario sentence entails it, and every
//! other hypothesis in that premise's column is neutral.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DialogueInstance, TurnAnswer};
use crate::error::{Error, Result};
use crate::segmenter::{segment_dialogue, Hypothesis, Premise, PremiseSource, Segmenter};
use crate::text::{content_words, fnv1a};

/// Sentence embedding used to build alignment labels offline.
pub trait EmbeddingOracle: Send + Sync {
    fn name(&self) -> String;
    fn dimension(&self) -> usize;
    /// Unit-norm embedding of `text`.
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing over stemmed content words and word bigrams.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dimension: usize,
}

impl HashedBagOfWords {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        Ok(Self { dimension })
    }
}

impl EmbeddingOracle for HashedBagOfWords {
    fn name(&self) -> String {
        format!("bow:{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let words = content_words(text);
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let slot = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[slot] += sign * weight;
        };
        for w in &words {
            add(w, 1.0);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            let c = 1.0 / (self.dimension as f64).sqrt();
            v.iter_mut().for_each(|x| *x = c);
        }
        v
    }
}

/// Resolves an oracle by name. Supported: `bow:<dim>`.
pub fn oracle_by_name(name: &str) -> Result<Box<dyn EmbeddingOracle>> {
    match name.split_once(':') {
        Some(("bow", dim)) => {
            let dim = dim
                .parse()
                .map_err(|_| Error::Config(format!("bad oracle dimension in `{name}`")))?;
            Ok(Box::new(HashedBagOfWords::new(dim)?))
        }
        _ => Err(Error::Config(format!("unknown embedding oracle `{name}`"))),
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentLabels {
    /// Aligned hypothesis for every premise, indexed by premise.
    pub premise_to_hypothesis: Vec<usize>,
    /// Target distribution over premises for each hypothesis that received
    /// at least one premise.
    pub row_targets: BTreeMap<usize, Vec<f64>>,
}

impl AlignmentLabels {
    pub fn from_mapping(premise_to_hypothesis: Vec<usize>) -> Self {
        let n = premise_to_hypothesis.len();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (j, &i) in premise_to_hypothesis.iter().enumerate() {
            groups.entry(i).or_default().push(j);
        }
        let row_targets = groups
            .into_iter()
            .map(|(i, premises)| {
                let mut row = vec![0.0; n];
                let w = 1.0 / premises.len() as f64;
                for j in premises {
                    row[j] = w;
                }
                (i, row)
            })
            .collect();
        Self {
            premise_to_hypothesis,
            row_targets,
        }
    }

    pub fn premise_count(&self) -> usize {
        self.premise_to_hypothesis.len()
    }

    /// Drops premises aligned to hypotheses at or beyond `m`.
    pub(crate) fn restricted_to(&self, m: usize) -> (Self, Vec<bool>) {
        let kept: Vec<bool> = self.premise_to_hypothesis.iter().map(|&i| i < m).collect();
        let mut restricted = self.clone();
        restricted.row_targets.retain(|&i, _| i < m);
        (restricted, kept)
    }
}

pub fn align_labels(
    hypotheses: &[Hypothesis],
    premises: &[Premise],
    oracle: &dyn EmbeddingOracle,
) -> Result<AlignmentLabels> {
    if hypotheses.is_empty() {
        return Err(Error::validation("alignment needs at least one hypothesis"));
    }
    let dim = oracle.dimension();
    let embed = |text: &str| -> Result<Vec<f64>> {
        let v = oracle.embed(text);
        if v.len() != dim {
            return Err(Error::Internal(format!(
                "oracle {} returned {} values, expected {dim}",
                oracle.name(),
                v.len()
            )));
        }
        Ok(v)
    };
    let hyp_vecs = hypotheses.iter().map(|h| embed(&h.text)).collect::<Result<Vec<_>>>()?;
    let mut mapping = Vec::with_capacity(premises.len());
    for premise in premises {
        let pv = embed(&premise.text)?;
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, hv) in hyp_vecs.iter().enumerate() {
            let sim = cosine_similarity(hv, &pv);
            if sim > best_sim {
                best = i;
                best_sim = sim;
            }
        }
        mapping.push(best);
    }
    Ok(AlignmentLabels::from_mapping(mapping))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntailmentState {
    Entailment = 0,
    Contradiction = 1,
    Neutral = 2,
}

impl EntailmentState {
    pub const ALL: [EntailmentState; 3] = [
        EntailmentState::Entailment,
        EntailmentState::Contradiction,
        EntailmentState::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            EntailmentState::Entailment => "E",
            EntailmentState::Contradiction => "C",
            EntailmentState::Neutral => "N",
        }
    }
}

impl Serialize for EntailmentState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for EntailmentState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "E" => Ok(EntailmentState::Entailment),
            "C" => Ok(EntailmentState::Contradiction),
            "N" => Ok(EntailmentState::Neutral),
            other => Err(serde::de::Error::custom(format!("bad entailment state `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub hypothesis: usize,
    pub premise: usize,
    pub state: EntailmentState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntailmentLabels {
    /// Labeled pairs in (hypothesis, premise) order.
    pub pairs: Vec<PairLabel>,
}

impl EntailmentLabels {
    pub fn get(&self, hypothesis: usize, premise: usize) -> Option<EntailmentState> {
        self.pairs
            .iter()
            .find(|p| p.hypothesis == hypothesis && p.premise == premise)
            .map(|p| p.state)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub(crate) fn restricted_to(&self, m: usize, kept_premise: &[bool]) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .filter(|p| p.hypothesis < m && kept_premise.get(p.premise).copied().unwrap_or(false))
                .copied()
                .collect(),
        }
    }
}

/// Non-neutral state a premise asserts about its aligned hypothesis.
fn asserted_state(premise: &Premise) -> EntailmentState {
    match (premise.source, premise.answer) {
        (PremiseSource::Turn, Some(TurnAnswer::No)) => EntailmentState::Contradiction,
        _ => EntailmentState::Entailment,
    }
}

pub fn entailment_labels(
    hypotheses: &[Hypothesis],
    premises: &[Premise],
    alignment: &AlignmentLabels,
) -> Result<EntailmentLabels> {
    if alignment.premise_count() != premises.len() {
        return Err(Error::validation(format!(
            "alignment covers {} premises, got {}",
            alignment.premise_count(),
            premises.len()
        )));
    }
    let m = hypotheses.len();
    let mut pairs = Vec::with_capacity(m * premises.len());
    for i in 0..m {
        for (j, premise) in premises.iter().enumerate() {
            let state = if alignment.premise_to_hypothesis[j] == i {
                asserted_state(premise)
            } else {
                EntailmentState::Neutral
            };
            pairs.push(PairLabel {
                hypothesis: i,
                premise: j,
                state,
            });
        }
    }
    Ok(EntailmentLabels { pairs })
}

/// Fraction of gold-annotated premises whose predicted alignment matches.
pub fn agreement_rate(predicted: &AlignmentLabels, gold: &BTreeMap<usize, usize>) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::validation("agreement rate of an empty gold set is undefined"));
    }
    let mut agree = 0usize;
    for (&premise, &hypothesis) in gold {
        let pred = predicted.premise_to_hypothesis.get(premise).ok_or_else(|| {
            Error::validation(format!("gold premise {premise} is out of range"))
        })?;
        if *pred == hypothesis {
            agree += 1;
        }
    }
    Ok(agree as f64 / gold.len() as f64)
}

/// One cached weak-label record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub utterance_id: String,
    pub oracle: String,
    pub hypotheses: usize,
    pub premise_to_hypothesis: Vec<usize>,
    pub pair_labels: Vec<PairLabel>,
}

impl LabelRecord {
    pub fn alignment(&self) -> AlignmentLabels {
        AlignmentLabels::from_mapping(self.premise_to_hypothesis.clone())
    }

    pub fn entailment(&self) -> EntailmentLabels {
        EntailmentLabels {
            pairs: self.pair_labels.clone(),
        }
    }
}

pub fn label_instance(
    instance: &DialogueInstance,
    segmenter: &dyn Segmenter,
    oracle: &dyn EmbeddingOracle,
) -> Result<LabelRecord> {
    let seg = segment_dialogue(&instance.document, &instance.scenario, &instance.history, segmenter)?;
    let alignment = align_labels(&seg.hypotheses, &seg.premises, oracle)?;
    let entail = entailment_labels(&seg.hypotheses, &seg.premises, &alignment)?;
    Ok(LabelRecord {
        utterance_id: instance.utterance_id.clone(),
        oracle: oracle.name(),
        hypotheses: seg.hypotheses.len(),
        premise_to_hypothesis: alignment.premise_to_hypothesis,
        pair_labels: entail.pairs,
    })
}

/// Weak labels keyed by (utterance id, oracle name). Reads are concurrent,
/// inserts take the write lock.
#[derive(Debug, Default)]
pub struct LabelCache {
    records: RwLock<HashMap<(String, String), LabelRecord>>,
}

impl LabelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(
        instances: &[DialogueInstance],
        segmenter: &dyn Segmenter,
        oracle: &dyn EmbeddingOracle,
    ) -> Result<Self> {
        let records = instances
            .par_iter()
            .map(|inst| label_instance(inst, segmenter, oracle))
            .collect::<Result<Vec<_>>>()?;
        let cache = Self::new();
        for r in records {
            cache.insert(r);
        }
        Ok(cache)
    }

    pub fn insert(&self, record: LabelRecord) {
        let key = (record.utterance_id.clone(), record.oracle.clone());
        self.records.write().expect("label cache poisoned").insert(key, record);
    }

    pub fn get(&self, utterance_id: &str, oracle: &str) -> Option<LabelRecord> {
        self.records
            .read()
            .expect("label cache poisoned")
            .get(&(utterance_id.to_string(), oracle.to_string()))
            .cloned()
    }

    pub fn require(&self, utterance_id: &str, oracle: &str) -> Result<LabelRecord> {
        self.get(utterance_id, oracle)
            .ok_or_else(|| Error::LabelCacheMiss(utterance_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("label cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes one JSON record per line, sorted by utterance id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let guard = self.records.read().expect("label cache poisoned");
        let mut records: Vec<&LabelRecord> = guard.values().collect();
        records.sort_by(|a, b| (&a.utterance_id, &a.oracle).cmp(&(&b.utterance_id, &b.oracle)));
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in records {
            let line = serde_json::to_string(r)?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let cache = Self::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            cache.insert(serde_json::from_str(&line)?);
        }
        Ok(cache)
    }
}

/// Gold alignment annotations for the agreement audit, one JSON object per
/// line: `{"utterance_id": ..., "gold": {"<premise>": <hypothesis>, ...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldAlignment {
    pub utterance_id: String,
    pub gold: BTreeMap<usize, usize>,
}

pub fn load_gold_alignments(path: &Path) -> Result<Vec<GoldAlignment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Pooled agreement over all annotated premises.
pub fn audit(cache: &LabelCache, oracle: &str, gold: &[GoldAlignment]) -> Result<f64> {
    let mut agree = 0.0;
    let mut total = 0usize;
    for g in gold {
        if g.gold.is_empty() {
            continue;
        }
        let record = cache.require(&g.utterance_id, oracle)?;
        agree += agreement_rate(&record.alignment(), &g.gold)? * g.gold.len() as f64;
        total += g.gold.len();
    }
    if total == 0 {
        return Err(Error::validation("gold file has no annotated premises"));
    }
    Ok(agree / total as f64)
}
