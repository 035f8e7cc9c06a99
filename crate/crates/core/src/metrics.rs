//! Decision accuracy and follow-up question BLEU.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::DecisionLabel;
use crate::error::{Error, Result};
use crate::text::tokenize;

fn check_lengths(predictions: &[DecisionLabel], golds: &[DecisionLabel]) -> Result<()> {
    if predictions.len() != golds.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::validation("accuracy of an empty prediction set is undefined"));
    }
    Ok(())
}

/// Recall per gold class; classes absent from `golds` are omitted.
pub fn class_wise(predictions: &[DecisionLabel], golds: &[DecisionLabel]) -> Result<BTreeMap<DecisionLabel, f64>> {
    check_lengths(predictions, golds)?;
    let mut totals: BTreeMap<DecisionLabel, (usize, usize)> = BTreeMap::new();
    for (p, g) in predictions.iter().zip(golds) {
        let entry = totals.entry(*g).or_default();
        entry.1 += 1;
        if p == g {
            entry.0 += 1;
        }
    }
    Ok(totals
        .into_iter()
        .map(|(label, (hit, total))| (label, hit as f64 / total as f64))
        .collect())
}

/// Micro accuracy and macro accuracy (mean recall over gold classes present).
pub fn micro_macro(predictions: &[DecisionLabel], golds: &[DecisionLabel]) -> Result<(f64, f64)> {
    let per_class = class_wise(predictions, golds)?;
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    let micro = correct as f64 / golds.len() as f64;
    let macro_ = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((micro, macro_))
}

/// Precision used for an order with zero n-gram matches.
pub const BLEU_SMOOTHING_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-`max_order` on a 0–100 scale, one reference per candidate.
///
/// Uniform weights over orders 1..=max_order and the usual brevity penalty.
/// An order with no matches gets precision `ε`; a corpus with no
/// unigram matches at all scores 0.
pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<String>], max_order: usize) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::validation("BLEU needs one reference per candidate"));
    }
    if max_order == 0 {
        return Err(Error::validation("BLEU order must be positive"));
    }
    let mut matches = vec![0usize; max_order];
    let mut totals = vec![0usize; max_order];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (cand, reference) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += reference.len();
        for n in 1..=max_order {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }
    if matches[0] == 0 || cand_len == 0 {
        return Ok(0.0);
    }
    let log_precision: f64 = (0..max_order)
        .map(|k| {
            let p = if matches[k] > 0 {
                matches[k] as f64 / totals[k] as f64
            } else {
                BLEU_SMOOTHING_EPSILON
            };
            p.ln()
        })
        .sum::<f64>()
        / max_order as f64;
    let brevity = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * brevity * log_precision.exp())
}

/// BLEU-1..4 over the instances where both the predicted and the gold
/// decision are MORE. `None` when that set is empty.
pub fn conditional_bleu(
    pred_decisions: &[DecisionLabel],
    gold_decisions: &[DecisionLabel],
    pred_questions: &[String],
    gold_questions: &[String],
) -> Result<Option<BTreeMap<usize, f64>>> {
    let n = gold_decisions.len();
    if pred_decisions.len() != n || pred_questions.len() != n || gold_questions.len() != n {
        return Err(Error::validation("conditional BLEU inputs must be aligned"));
    }
    let kept = kept_indices(pred_decisions, gold_decisions);
    if kept.is_empty() {
        return Ok(None);
    }
    let candidates: Vec<Vec<String>> = kept.iter().map(|&k| tokenize(&pred_questions[k])).collect();
    let references: Vec<Vec<String>> = kept.iter().map(|&k| tokenize(&gold_questions[k])).collect();
    let mut scores = BTreeMap::new();
    for order in 1..=4 {
        scores.insert(order, corpus_bleu(&candidates, &references, order)?);
    }
    Ok(Some(scores))
}

/// Indices where prediction and gold are both MORE.
pub fn kept_indices(pred_decisions: &[DecisionLabel], gold_decisions: &[DecisionLabel]) -> Vec<usize> {
    pred_decisions
        .iter()
        .zip(gold_decisions)
        .enumerate()
        .filter(|(_, (p, g))| **p == DecisionLabel::More && **g == DecisionLabel::More)
        .map(|(k, _)| k)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use DecisionLabel::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn micro_macro_hand_values() {
        assert_eq!(micro_macro(&[Yes, No, More], &[Yes, No, More]).unwrap(), (1.0, 1.0));
        let (micro, macro_) = micro_macro(&[Yes, Yes, Yes, No], &[Yes, Yes, No, No]).unwrap();
        assert_eq!((micro, macro_), (0.75, 0.75));
        assert!(micro_macro(&[], &[]).is_err());
        assert!(micro_macro(&[Yes], &[Yes, No]).is_err());
    }

    #[test]
    fn class_wise_hand_values() {
        let cw = class_wise(&[No, No], &[Yes, No]).unwrap();
        assert_eq!(cw.get(&Yes), Some(&0.0));
        assert_eq!(cw.get(&No), Some(&1.0));
        assert_eq!(cw.len(), 2);
        let single = class_wise(&[More, More], &[More, More]).unwrap();
        assert_eq!(single.into_iter().collect::<Vec<_>>(), vec![(More, 1.0)]);
    }

    #[test]
    fn bleu_identity_and_zero_overlap() {
        let c = vec![toks("do you live in england ?"), toks("are you over 18 years old ?")];
        for n in 1..=4 {
            assert!((corpus_bleu(&c, &c, n).unwrap() - 100.0).abs() < 1e-9);
        }
        let r = vec![toks("a b c d"), toks("e f g h")];
        let z = vec![toks("w x y z"), toks("p q r s")];
        for n in 1..=4 {
            assert_eq!(corpus_bleu(&z, &r, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn bleu_hand_computed() {
        // candidate "the cat sat", reference "the cat sat down":
        // p1 = 1, p2 = 1, BP = exp(1 - 4/3)
        let c = vec![toks("the cat sat")];
        let r = vec![toks("the cat sat down")];
        let bp = (1.0f64 - 4.0 / 3.0).exp();
        assert!((corpus_bleu(&c, &r, 2).unwrap() - 100.0 * bp).abs() < 1e-9);
        // no trigram beyond the one present: p3 = 1/1
        assert!((corpus_bleu(&c, &r, 3).unwrap() - 100.0 * bp).abs() < 1e-9);
        // order 4 has no candidate 4-grams: precision = ε
        let expected = 100.0 * bp * (BLEU_SMOOTHING_EPSILON.ln() / 4.0).exp();
        assert!((corpus_bleu(&c, &r, 4).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn conditional_bleu_filters_on_more() {
        let preds = [More, Yes, More];
        let golds = [More, More, No];
        let pq = vec!["Are you employed?".to_string(), "x".into(), "y".into()];
        let gq = vec!["Are you employed?".to_string(), "z".into(), "w".into()];
        let scores = conditional_bleu(&preds, &golds, &pq, &gq).unwrap().unwrap();
        assert!(scores.values().all(|s| (s - 100.0).abs() < 1e-9));
        assert!(conditional_bleu(&[Yes], &[More], &pq[..1], &gq[..1]).unwrap().is_none());
        assert!(conditional_bleu(&[Yes], &[More, Yes], &pq[..1], &gq[..1]).is_err());
    }
}
