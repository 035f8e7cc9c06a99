//! Rule segmenter against hand-annotated unit boundaries and a hand-labelled
//! abbreviation set.

use std::collections::BTreeSet;

use biae_core::segmenter::{segment_document, segment_scenario, RuleSegmenter};
use serde::Deserialize;

#[derive(Deserialize)]
struct GoldDoc {
    document: String,
    units: Vec<String>,
}

#[derive(Deserialize)]
struct GoldSentences {
    text: String,
    sentences: Vec<String>,
}

/// Unit start positions measured in words, excluding the first unit.
fn boundaries<S: AsRef<str>>(units: &[S]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut pos = 0;
    for (k, u) in units.iter().enumerate() {
        if k > 0 {
            out.insert(pos);
        }
        pos += u.as_ref().split_whitespace().count();
    }
    out
}

#[test]
fn boundary_f1_on_annotated_documents() {
    let docs: Vec<GoldDoc> = serde_json::from_str(include_str!("fixtures/edu_gold.json")).unwrap();
    assert_eq!(docs.len(), 20);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for doc in &docs {
        let predicted: Vec<String> = segment_document(&doc.document, &RuleSegmenter)
            .unwrap()
            .into_iter()
            .map(|h| h.text)
            .collect();
        let words = |u: &[String]| u.iter().map(|s| s.split_whitespace().count()).sum::<usize>();
        assert_eq!(words(&predicted), words(&doc.units), "word coverage differs for {:?}", doc.document);
        let (p, g) = (boundaries(&predicted), boundaries(&doc.units));
        tp += p.intersection(&g).count();
        fp += p.difference(&g).count();
        fn_ += g.difference(&p).count();
    }
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    let recall = tp as f64 / (tp + fn_).max(1) as f64;
    let f1 = 2.0 * precision * recall / (precision + recall).max(f64::EPSILON);
    println!("boundary precision {precision:.3} recall {recall:.3} F1 {f1:.3} ({tp} tp, {fp} fp, {fn_} fn)");
    assert!(f1 >= 0.9, "boundary F1 {f1:.3} below 0.9");
}

#[test]
fn abbreviations_do_not_split_sentences() {
    let set: Vec<GoldSentences> = serde_json::from_str(include_str!("fixtures/abbreviations.json")).unwrap();
    let total: usize = set.iter().map(|s| s.sentences.len()).sum();
    assert_eq!(total, 50);
    let mut correct = 0;
    for item in &set {
        let got = segment_scenario(&item.text);
        if got == item.sentences {
            correct += item.sentences.len();
        } else {
            println!("mismatch: {got:?} vs {:?}", item.sentences);
        }
    }
    assert_eq!(correct, total);
}

#[test]
fn segmentation_is_deterministic_and_spans_are_ordered() {
    let docs: Vec<GoldDoc> = serde_json::from_str(include_str!("fixtures/edu_gold.json")).unwrap();
    for doc in &docs {
        let a = segment_document(&doc.document, &RuleSegmenter).unwrap();
        let b = segment_document(&doc.document, &RuleSegmenter).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[0].span.1 <= w[1].span.0);
        }
        for h in &a {
            assert_eq!(&doc.document[h.span.0..h.span.1], h.text);
        }
    }
}
