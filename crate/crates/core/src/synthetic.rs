//! A small hand-written corpus in the public record layout, and a helper
//! that trains a checkpoint on it. Used by tests, demos and the service
//! fixtures; it runs without the real dataset.

use crate::checkpoint::Checkpoint;
use crate::corpus::{DialogueInstance, HistoryTurn, TurnAnswer};
use crate::error::Result;
use crate::segmenter::RuleSegmenter;
use crate::train::{train_with_labels, StepRecord, TrainConfig};
use crate::weak_labels::{oracle_by_name, LabelCache};

struct Family {
    document: &'static str,
    question: &'static str,
    follow_up: &'static str,
    unrelated: &'static str,
}

const FAMILIES: [Family; 8] = [
    Family {
        document: "You can take statutory maternity leave if you are an employee and you give your employer the correct notice.",
        question: "Can I take maternity leave?",
        follow_up: "Are you an employee?",
        unrelated: "How do I renew my passport?",
    },
    Family {
        document: "You could get Carer's Allowance if you care for someone at least 35 hours a week.",
        question: "Can I get Carer's Allowance?",
        follow_up: "Do you care for someone at least 35 hours a week?",
        unrelated: "What is the speed limit on motorways?",
    },
    Family {
        document: "You can claim the Winter Fuel Payment if you were born before 1955.",
        question: "Am I eligible for the Winter Fuel Payment?",
        follow_up: "Were you born before 1955?",
        unrelated: "Where can I register a boat?",
    },
    Family {
        document: "You can apply for a Blue Badge if you have a mobility disability.",
        question: "Can I apply for a Blue Badge?",
        follow_up: "Do you have a mobility disability?",
        unrelated: "When does the tax year end?",
    },
    Family {
        document: "Housing Benefit can help if you pay rent to a landlord.",
        question: "Can I get Housing Benefit?",
        follow_up: "Do you pay rent to a landlord?",
        unrelated: "How long is a fishing licence valid?",
    },
    Family {
        document: "Prescriptions are free if you are over 60.",
        question: "Are my prescriptions free?",
        follow_up: "Are you over 60?",
        unrelated: "Can I import a car from abroad?",
    },
    Family {
        document: "You can get a tuition loan if you study at a recognised university.",
        question: "Can I get a tuition loan?",
        follow_up: "Do you study at a recognised university?",
        unrelated: "How do I report a pothole?",
    },
    Family {
        document: "You can transfer part of your allowance to your partner if you earn less than the threshold.",
        question: "Can I transfer my allowance?",
        follow_up: "Do you earn less than the threshold?",
        unrelated: "What documents do I need to marry abroad?",
    },
];

/// Scenario for the first family's YES instance: the notice is given in the
/// scenario and employment is confirmed by a prior turn.
pub const NOTICE_SCENARIO: &str = "I am still working there and I have already handed in my notice.";

fn make(k: usize, kind: &str, question: &str, scenario: &str, history: Vec<HistoryTurn>, answer: &str) -> DialogueInstance {
    let mut inst = DialogueInstance::new(format!("synthetic{k}-{kind}"), FAMILIES[k].document, question, scenario, history, answer)
        .expect("synthetic instances are well formed");
    inst.tree_id = format!("synthetic{k}");
    inst
}

/// 32 instances: per family one MORE, one YES, one NO and one IRRELEVANT.
pub fn synthetic_corpus() -> Vec<DialogueInstance> {
    let mut out = Vec::with_capacity(4 * FAMILIES.len());
    for (k, f) in FAMILIES.iter().enumerate() {
        let turn = |a| vec![HistoryTurn::new(f.follow_up, a)];
        let yes_scenario = if k == 0 { NOTICE_SCENARIO } else { "" };
        out.push(make(k, "more", f.question, "", vec![], f.follow_up));
        out.push(make(k, "yes", f.question, yes_scenario, turn(TurnAnswer::Yes), "Yes"));
        out.push(make(k, "no", f.question, "", turn(TurnAnswer::No), "No"));
        out.push(make(k, "irrelevant", f.unrelated, "", vec![], "Irrelevant"));
    }
    out
}

/// Full-batch, dropout-free settings that fit the synthetic corpus.
pub fn overfit_config(steps: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        batch_size: 32,
        dropout: 0.0,
        warmup_fraction: 0.0,
        seed: 7,
        encoder_name: "toy:7:32".into(),
        oracle_name: "bow:256".into(),
        max_steps: Some(steps),
        ..TrainConfig::default()
    }
}

/// Labels and trains on `instances`, returning the checkpoint and the loss
/// curve.
pub fn train_checkpoint(instances: &[DialogueInstance], config: &TrainConfig) -> Result<(Checkpoint, Vec<StepRecord>)> {
    let oracle = oracle_by_name(&config.oracle_name)?;
    let cache = LabelCache::build(instances, &RuleSegmenter, oracle.as_ref())?;
    train_with_labels(instances, &cache, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DecisionLabel;

    #[test]
    fn corpus_shape() {
        let c = synthetic_corpus();
        assert_eq!(c.len(), 32);
        for label in DecisionLabel::ALL {
            assert_eq!(c.iter().filter(|i| i.gold_decision == label).count(), 8);
        }
    }
}
