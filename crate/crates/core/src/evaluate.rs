//! Split-level evaluation: decisions and questions for every instance, the
//! metrics report, and the α/β analysis over success and fail partitions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{alpha, constructed_hypothesis_states, EntailmentAnalysis};
use crate::corpus::{subset_flags, DecisionLabel, DialogueInstance, SubsetCounts, SubsetFlags};
use crate::error::{Error, Result};
use crate::metrics::{class_wise, conditional_bleu, micro_macro};
use crate::pipeline::{Prediction, Predictor};
use crate::weak_labels::{EntailmentState, LabelCache};

/// One row of the per-instance predictions table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub utterance_id: String,
    pub gold: DecisionLabel,
    pub predicted: DecisionLabel,
    pub gold_question: String,
    pub predicted_question: String,
    pub bullet_point: bool,
    pub has_scenario: bool,
    pub has_history: bool,
    #[serde(skip)]
    pub hypothesis_states: Vec<EntailmentState>,
}

impl InstancePrediction {
    fn flags(&self) -> SubsetFlags {
        SubsetFlags {
            bullet_point: self.bullet_point,
            has_scenario: self.has_scenario,
            has_history: self.has_history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_accuracy: f64,
    pub macro_accuracy: f64,
    pub class_wise: BTreeMap<DecisionLabel, f64>,
    /// BLEU-1..4 on the MORE/MORE pairs; absent when there are none.
    pub bleu: Option<BTreeMap<usize, f64>>,
    pub subset_micro: BTreeMap<String, f64>,
    pub subset_macro: BTreeMap<String, f64>,
    pub counts: SubsetCounts,
}

fn row(instance: &DialogueInstance, p: Prediction) -> InstancePrediction {
    let flags = subset_flags(instance);
    InstancePrediction {
        utterance_id: instance.utterance_id.clone(),
        gold: instance.gold_decision,
        predicted: p.decision,
        gold_question: if instance.gold_decision == DecisionLabel::More {
            instance.gold_answer.clone()
        } else {
            String::new()
        },
        predicted_question: p.follow_up_question.unwrap_or_default(),
        bullet_point: flags.bullet_point,
        has_scenario: flags.has_scenario,
        has_history: flags.has_history,
        hypothesis_states: p.hypothesis_states,
    }
}

/// Runs the predictor over `instances` in parallel; rows keep input order.
pub fn predict_all(predictor: &Predictor, instances: &[DialogueInstance]) -> Result<Vec<InstancePrediction>> {
    instances
        .par_iter()
        .map(|inst| {
            predictor
                .predict(&inst.document, &inst.question, &inst.scenario, &inst.history)
                .map(|p| row(inst, p))
        })
        .collect()
}

pub fn report(rows: &[InstancePrediction]) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::validation("nothing to evaluate"));
    }
    let preds: Vec<DecisionLabel> = rows.iter().map(|r| r.predicted).collect();
    let golds: Vec<DecisionLabel> = rows.iter().map(|r| r.gold).collect();
    let (micro, macro_) = micro_macro(&preds, &golds)?;
    let pred_q: Vec<String> = rows.iter().map(|r| r.predicted_question.clone()).collect();
    let gold_q: Vec<String> = rows.iter().map(|r| r.gold_question.clone()).collect();

    let mut subset_micro = BTreeMap::new();
    let mut subset_macro = BTreeMap::new();
    for (name, member) in SubsetCounts::names() {
        let (p, g): (Vec<_>, Vec<_>) = rows.iter().filter(|r| member(&r.flags())).map(|r| (r.predicted, r.gold)).unzip();
        if p.is_empty() {
            continue;
        }
        let (mi, ma) = micro_macro(&p, &g)?;
        subset_micro.insert(name.to_string(), mi);
        subset_macro.insert(name.to_string(), ma);
    }
    let mut counts = SubsetCounts::default();
    for flags in rows.iter().map(InstancePrediction::flags) {
        counts.add(flags);
    }
    Ok(MetricsReport {
        micro_accuracy: micro,
        macro_accuracy: macro_,
        class_wise: class_wise(&preds, &golds)?,
        bleu: conditional_bleu(&preds, &golds, &pred_q, &gold_q)?,
        subset_micro,
        subset_macro,
        counts,
    })
}

/// α/β analysis for correctly and wrongly decided instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedAnalysis {
    pub oracle: String,
    pub success: Option<EntailmentAnalysis>,
    pub fail: Option<EntailmentAnalysis>,
    /// Instances without hypotheses, where α is undefined.
    pub skipped: usize,
}

/// α for every row against the constructed states from the cached weak
/// labels of `oracle`. Rows without hypotheses are skipped.
pub fn analyze_entailment(rows: &[InstancePrediction], cache: &LabelCache, oracle: &str) -> Result<PartitionedAnalysis> {
    let mut success = Vec::new();
    let mut fail = Vec::new();
    let mut skipped = 0;
    for r in rows {
        let m = r.hypothesis_states.len();
        if m == 0 {
            skipped += 1;
            continue;
        }
        let record = cache.require(&r.utterance_id, oracle)?;
        let constructed = constructed_hypothesis_states(m, &record.entailment());
        let a = alpha(&r.hypothesis_states, &constructed)?;
        if r.predicted == r.gold {
            success.push(a);
        } else {
            fail.push(a);
        }
    }
    let summarize = |alphas: Vec<f64>| (!alphas.is_empty()).then(|| EntailmentAnalysis::from_alphas(alphas)).transpose();
    Ok(PartitionedAnalysis {
        oracle: oracle.to_string(),
        success: summarize(success)?,
        fail: summarize(fail)?,
        skipped,
    })
}
