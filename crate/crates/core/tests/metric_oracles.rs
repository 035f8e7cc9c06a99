//! Metrics against a recorded reference BLEU, a naive in-test BLEU, and
//! hand-computed accuracy and α/β values.

mod common;

use biae_core::analysis::{alpha, beta};
use biae_core::corpus::DecisionLabel::*;
use biae_core::metrics::{class_wise, conditional_bleu, corpus_bleu, micro_macro};
use biae_core::weak_labels::EntailmentState::*;
use common::{accuracy_cases, bleu_fixture as fixture, naive_bleu, words};

#[test]
fn corpus_bleu_matches_recorded_reference() {
    let f = fixture();
    for (name, &(a, b)) in &f.subsets {
        let cands: Vec<Vec<String>> = f.pairs[a..b].iter().map(|p| words(&p.candidate)).collect();
        let refs: Vec<Vec<String>> = f.pairs[a..b].iter().map(|p| words(&p.reference)).collect();
        for (order, expected) in &f.scores[name] {
            let n: usize = order.parse().unwrap();
            let got = corpus_bleu(&cands, &refs, n).unwrap();
            assert!((got - expected).abs() < 1e-6, "{name} BLEU-{n}: {got} vs {expected}");
            let naive = naive_bleu(&cands, &refs, n);
            assert!((got - naive).abs() < 1e-9, "{name} BLEU-{n}: {got} vs naive {naive}");
        }
    }
}

#[test]
fn conditional_bleu_uses_only_more_more_pairs() {
    let f = fixture();
    let (a, b) = f.subsets["all"];
    assert_eq!(b - a, 50);
    // interleave distractors that must be filtered out
    let (mut pd, mut gd, mut pq, mut gq) = (vec![], vec![], vec![], vec![]);
    for (k, p) in f.pairs[a..b].iter().enumerate() {
        pd.push(More);
        gd.push(More);
        pq.push(p.candidate.clone());
        gq.push(p.reference.clone());
        let (pred, gold) = [(Yes, More), (More, No), (Irrelevant, Irrelevant)][k % 3];
        pd.push(pred);
        gd.push(gold);
        pq.push("completely unrelated words".into());
        gq.push("nothing shared here".into());
    }
    let scores = conditional_bleu(&pd, &gd, &pq, &gq).unwrap().unwrap();
    for (order, expected) in &f.scores["all"] {
        let got = scores[&order.parse::<usize>().unwrap()];
        assert!((got - expected).abs() < 1e-6, "BLEU-{order}: {got} vs {expected}");
    }
}

#[test]
fn bleu_extremes() {
    let f = fixture();
    let texts: Vec<String> = f.pairs.iter().map(|p| p.reference.clone()).collect();
    let more = vec![More; texts.len()];
    let scores = conditional_bleu(&more, &more, &texts, &texts).unwrap().unwrap();
    assert!(scores.values().all(|s| (s - 100.0).abs() < 1e-9));
    let other: Vec<String> = texts.iter().map(|_| "zzz yyy xxx www".to_string()).collect();
    let scores = conditional_bleu(&more, &more, &other, &texts).unwrap().unwrap();
    assert!(scores.values().all(|&s| s == 0.0));
    assert_eq!(conditional_bleu(&[Yes, No], &[More, More], &texts[..2], &texts[..2]).unwrap(), None);
}

#[test]
fn accuracy_hand_values() {
    for case in accuracy_cases() {
        let (mi, ma) = micro_macro(&case.pred, &case.gold).unwrap();
        assert!((mi - case.micro).abs() < 1e-12 && (ma - case.macro_).abs() < 1e-12, "{:?}: {mi} {ma}", case.pred);
        let cw = class_wise(&case.pred, &case.gold).unwrap();
        assert_eq!(cw.len(), case.per_class.len());
        for (label, recall) in case.per_class {
            assert!((cw[&label] - recall).abs() < 1e-12, "{label}: {} vs {recall}", cw[&label]);
        }
    }
}

#[test]
fn alpha_beta_hand_values() {
    assert_eq!(alpha(&[Entailment, Contradiction, Neutral, Neutral], &[Entailment, Contradiction, Neutral, Entailment]).unwrap(), 0.75);
    assert_eq!(alpha(&[Neutral; 5], &[Neutral; 5]).unwrap(), 1.0);
    assert_eq!(alpha(&[Entailment], &[Contradiction]).unwrap(), 0.0);
    assert!((beta(&[1.0, 0.5, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(beta(&[1.0; 4]).unwrap(), 1.0);
    assert_eq!(beta(&[0.99, 0.0]).unwrap(), 0.0);
}
