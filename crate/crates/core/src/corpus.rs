//! ShARC-format dialogue data: loading, validation and the canonical
//! instance/label model shared by the rest of the pipeline.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// The four-way dialogue decision.
///
/// The discriminant order is the class index used by the decision head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DecisionLabel {
    Irrelevant = 0,
    Yes = 1,
    No = 2,
    More = 3,
}

impl DecisionLabel {
    pub const ALL: [DecisionLabel; 4] = [
        DecisionLabel::Irrelevant,
        DecisionLabel::Yes,
        DecisionLabel::No,
        DecisionLabel::More,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionLabel::Irrelevant => "IRRELEVANT",
            DecisionLabel::Yes => "YES",
            DecisionLabel::No => "NO",
            DecisionLabel::More => "MORE",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != DecisionLabel::More
    }
}

impl fmt::Display for DecisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IRRELEVANT" => Ok(DecisionLabel::Irrelevant),
            "YES" => Ok(DecisionLabel::Yes),
            "NO" => Ok(DecisionLabel::No),
            "MORE" => Ok(DecisionLabel::More),
            other => Err(Error::validation(format!("unknown decision label `{other}`"))),
        }
    }
}

/// Normalizes a gold answer string to its decision class.
pub fn decision_label_of(gold_answer: &str) -> Result<DecisionLabel> {
    let trimmed = gold_answer.trim();
    if trimmed.is_empty() {
        return Err(Error::validation("gold answer is empty"));
    }
    Ok(match trimmed.to_ascii_lowercase().as_str() {
        "yes" => DecisionLabel::Yes,
        "no" => DecisionLabel::No,
        "irrelevant" => DecisionLabel::Irrelevant,
        _ => DecisionLabel::More,
    })
}

/// A binary answer to a follow-up question.
///
/// Corpus files spell these `Yes`/`No`; parsing is case-insensitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TurnAnswer {
    Yes,
    No,
}

impl TurnAnswer {
    pub fn word(self) -> &'static str {
        match self {
            TurnAnswer::Yes => "Yes",
            TurnAnswer::No => "No",
        }
    }
}

impl FromStr for TurnAnswer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(TurnAnswer::Yes),
            "no" => Ok(TurnAnswer::No),
            other => Err(Error::validation(format!("answer must be yes or no, got `{other}`"))),
        }
    }
}

impl Serialize for TurnAnswer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.word())
    }
}

impl<'de> Deserialize<'de> for TurnAnswer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub follow_up_question: String,
    pub follow_up_answer: TurnAnswer,
}

impl HistoryTurn {
    pub fn new(question: impl Into<String>, answer: TurnAnswer) -> Self {
        Self {
            follow_up_question: question.into(),
            follow_up_answer: answer,
        }
    }
}

/// One ShARC example.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueInstance {
    pub utterance_id: String,
    pub tree_id: String,
    pub source_url: String,
    pub document: String,
    pub question: String,
    pub scenario: String,
    pub history: Vec<HistoryTurn>,
    pub gold_answer: String,
    pub gold_decision: DecisionLabel,
    /// Kept opaque: the public files store evidence as question/answer objects.
    pub evidence: Vec<Value>,
    /// Unrecognized keys, preserved for round-tripping.
    pub extra: Map<String, Value>,
}

/// On-disk record layout of the public distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SharcRecord {
    utterance_id: String,
    tree_id: String,
    source_url: String,
    snippet: String,
    question: String,
    scenario: String,
    history: Vec<HistoryTurn>,
    #[serde(default)]
    evidence: Vec<Value>,
    answer: String,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

const REQUIRED_STRING_FIELDS: [&str; 6] = [
    "utterance_id",
    "tree_id",
    "source_url",
    "snippet",
    "question",
    "scenario",
];

impl DialogueInstance {
    /// Builds an instance from user-supplied parts, deriving the gold decision
    /// from `gold_answer`.
    pub fn new(
        utterance_id: impl Into<String>,
        document: impl Into<String>,
        question: impl Into<String>,
        scenario: impl Into<String>,
        history: Vec<HistoryTurn>,
        gold_answer: impl Into<String>,
    ) -> Result<Self> {
        let gold_answer = gold_answer.into();
        let instance = Self {
            utterance_id: utterance_id.into(),
            tree_id: String::new(),
            source_url: String::new(),
            document: document.into(),
            question: question.into(),
            scenario: scenario.into(),
            history,
            gold_decision: decision_label_of(&gold_answer)?,
            gold_answer,
            evidence: Vec::new(),
            extra: Map::new(),
        };
        instance.check()?;
        Ok(instance)
    }

    fn check(&self) -> Result<()> {
        let schema = |field: &str| Error::Schema {
            record: self.utterance_id.clone(),
            field: field.to_string(),
        };
        if self.document.trim().is_empty() {
            return Err(schema("snippet"));
        }
        if self.question.trim().is_empty() {
            return Err(schema("question"));
        }
        if self.history.iter().any(|t| t.follow_up_question.trim().is_empty()) {
            return Err(schema("history.follow_up_question"));
        }
        Ok(())
    }

    fn from_value(index: usize, value: Value) -> Result<Self> {
        let record_name = value
            .get("utterance_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{index}"));
        let schema = |field: &str| Error::Schema {
            record: record_name.clone(),
            field: field.to_string(),
        };
        let obj = value.as_object().ok_or_else(|| schema("<record is not an object>"))?;
        for field in REQUIRED_STRING_FIELDS.iter().chain(["answer"].iter()) {
            match obj.get(*field) {
                Some(Value::String(_)) => {}
                _ => return Err(schema(field)),
            }
        }
        if !matches!(obj.get("history"), Some(Value::Array(_))) {
            return Err(schema("history"));
        }
        let record: SharcRecord =
            serde_json::from_value(value).map_err(|e| schema(&format!("history ({e})")))?;
        let gold_decision = decision_label_of(&record.answer).map_err(|_| schema("answer"))?;
        let instance = Self {
            utterance_id: record.utterance_id,
            tree_id: record.tree_id,
            source_url: record.source_url,
            document: record.snippet,
            question: record.question,
            scenario: record.scenario,
            history: record.history,
            gold_answer: record.answer,
            gold_decision,
            evidence: record.evidence,
            extra: record.extra,
        };
        instance.check()?;
        Ok(instance)
    }

    /// Serializes back to the public record layout.
    pub fn to_value(&self) -> Value {
        let record = SharcRecord {
            utterance_id: self.utterance_id.clone(),
            tree_id: self.tree_id.clone(),
            source_url: self.source_url.clone(),
            snippet: self.document.clone(),
            question: self.question.clone(),
            scenario: self.scenario.clone(),
            history: self.history.clone(),
            evidence: self.evidence.clone(),
            answer: self.gold_answer.clone(),
            extra: self.extra.clone(),
        };
        serde_json::to_value(record).expect("record serialization is infallible")
    }

    pub fn subset_flags(&self) -> SubsetFlags {
        subset_flags(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// File name used by the public distribution for this split.
    pub fn file_name(self) -> String {
        format!("sharc_{}.json", self.as_str())
    }

    pub fn path_in(self, data_dir: &Path) -> PathBuf {
        data_dir.join(self.file_name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn read_array(path: &Path) -> Result<Vec<Value>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match serde_json::from_slice::<Value>(&bytes)? {
        Value::Array(items) => Ok(items),
        _ => Err(Error::Schema {
            record: path.display().to_string(),
            field: "<top level must be an array>".into(),
        }),
    }
}

/// Loads one split, failing on the first malformed record.
pub fn load_dataset(path: &Path, split: Split) -> Result<Vec<DialogueInstance>> {
    let items = read_array(path)?;
    let instances = items
        .into_iter()
        .enumerate()
        .map(|(i, v)| DialogueInstance::from_value(i, v))
        .collect::<Result<Vec<_>>>()?;
    tracing::debug!(split = %split, count = instances.len(), "loaded corpus split");
    Ok(instances)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub count: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every record and collects all violations instead of stopping at the first.
pub fn validate_file(path: &Path) -> Result<ValidationReport> {
    let items = read_array(path)?;
    let mut report = ValidationReport::default();
    for (i, item) in items.into_iter().enumerate() {
        report.count += 1;
        if let Err(e) = DialogueInstance::from_value(i, item) {
            report.violations.push(e.to_string());
        }
    }
    Ok(report)
}

pub fn save_dataset(path: &Path, instances: &[DialogueInstance]) -> Result<()> {
    let values: Vec<Value> = instances.iter().map(DialogueInstance::to_value).collect();
    let text = serde_json::to_string_pretty(&values)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetFlags {
    pub bullet_point: bool,
    pub has_scenario: bool,
    pub has_history: bool,
}

/// True if any line starts with a list marker: `*`, `-`, `•`, `1.` or `1)`.
pub fn has_bullet_marker(document: &str) -> bool {
    document.lines().any(|line| bullet_marker_len(line.trim_start()).is_some())
}

/// Length in bytes of a leading list marker (including the following
/// whitespace), if the line starts with one.
pub(crate) fn bullet_marker_len(line: &str) -> Option<usize> {
    let mut chars = line.char_indices();
    let (_, first) = chars.next()?;
    let after_marker = match first {
        '*' | '-' | '•' => first.len_utf8(),
        c if c.is_ascii_digit() => {
            let digits_end = line
                .char_indices()
                .find(|(_, c)| !c.is_ascii_digit())
                .map(|(i, _)| i)?;
            match line[digits_end..].chars().next() {
                Some('.') | Some(')') => digits_end + 1,
                _ => return None,
            }
        }
        _ => return None,
    };
    let rest = &line[after_marker..];
    // "-5 degrees" or "1.5 million" are not list items
    match rest.chars().next() {
        None => Some(after_marker),
        Some(c) if c.is_whitespace() => {
            let ws = rest.len() - rest.trim_start().len();
            Some(after_marker + ws)
        }
        _ => None,
    }
}

pub fn subset_flags(instance: &DialogueInstance) -> SubsetFlags {
    SubsetFlags {
        bullet_point: has_bullet_marker(&instance.document),
        has_scenario: !instance.scenario.trim().is_empty(),
        has_history: !instance.history.is_empty(),
    }
}

pub type SubsetPredicate = fn(&SubsetFlags) -> bool;

/// Subset sizes over a split, in the six-way breakdown used for analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetCounts {
    pub bullet_point: usize,
    pub regular: usize,
    pub scenario: usize,
    pub no_scenario: usize,
    pub history: usize,
    pub no_history: usize,
    pub all: usize,
}

impl SubsetCounts {
    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a DialogueInstance>) -> Self {
        let mut counts = Self::default();
        for flags in instances.into_iter().map(subset_flags) {
            counts.add(flags);
        }
        counts
    }

    pub fn add(&mut self, flags: SubsetFlags) {
        self.all += 1;
        if flags.bullet_point {
            self.bullet_point += 1;
        } else {
            self.regular += 1;
        }
        if flags.has_scenario {
            self.scenario += 1;
        } else {
            self.no_scenario += 1;
        }
        if flags.has_history {
            self.history += 1;
        } else {
            self.no_history += 1;
        }
    }

    /// Subset names paired with their membership predicate.
    pub fn names() -> [(&'static str, SubsetPredicate); 6] {
        [
            ("bullet_point", |f| f.bullet_point),
            ("regular", |f| !f.bullet_point),
            ("scenario", |f| f.has_scenario),
            ("no_scenario", |f| !f.has_scenario),
            ("history", |f| f.has_history),
            ("no_history", |f| !f.has_history),
        ]
    }
}
