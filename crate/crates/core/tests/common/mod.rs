//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use biae_core::biae::{self, BiaeParams, Targets};
use biae_core::corpus::DecisionLabel::{self, *};
use biae_core::corpus::{HistoryTurn, TurnAnswer};
use biae_core::encoder::EncodedDialogue;
use biae_core::error::Result;
use biae_core::metrics::BLEU_SMOOTHING_EPSILON;
use biae_core::pipeline::{DecisionMaker, Prediction};
use biae_core::qgen::QuestionGenerator;
use biae_core::segmenter::{build_premise_set, Hypothesis, PremiseSource};
use biae_core::weak_labels::{
    align_labels, entailment_labels, AlignmentLabels, EmbeddingOracle, EntailmentLabels, EntailmentState, PairLabel,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for relative errors of near-zero gradient entries.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_input(rng: &mut ChaCha8Rng, m: usize, n: usize, d: usize) -> EncodedDialogue {
    EncodedDialogue {
        hypotheses: Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0)),
        question: Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0)),
        premises: Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0)),
    }
}

pub fn random_params(rng: &mut ChaCha8Rng, d: usize) -> BiaeParams {
    let mut p = BiaeParams::init(d, rng.random());
    // non-zero biases so their gradients are exercised away from the origin
    p.b_align = rng.random_range(-0.5..0.5);
    p.b_attn = rng.random_range(-0.5..0.5);
    p.b_entail.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    p.b_decision.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    p
}

/// Random weak labels: each premise aligned to one hypothesis and labeled
/// E or C there, N elsewhere in its column.
pub fn random_targets(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Targets {
    let mapping: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    let mut pairs = Vec::new();
    for i in 0..m {
        for (j, &aligned) in mapping.iter().enumerate() {
            let state = if aligned == i {
                if rng.random_bool(0.5) {
                    EntailmentState::Entailment
                } else {
                    EntailmentState::Contradiction
                }
            } else {
                EntailmentState::Neutral
            };
            pairs.push(PairLabel { hypothesis: i, premise: j, state });
        }
    }
    Targets {
        decision: DecisionLabel::from_index(rng.random_range(0..4)).unwrap(),
        alignment: Some(AlignmentLabels::from_mapping(mapping)),
        entailment: Some(EntailmentLabels { pairs }),
    }
}

pub fn joint(params: &BiaeParams, input: &EncodedDialogue, targets: &Targets, lambda: f64) -> f64 {
    let pass = biae::forward(params, input);
    biae::losses(&pass, targets, lambda).unwrap().total
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error per parameter group between the analytic gradient and
/// central finite differences of the joint loss.
pub fn parameter_gradient_errors(
    params: &BiaeParams,
    input: &EncodedDialogue,
    targets: &Targets,
    lambda: f64,
) -> Vec<(&'static str, f64)> {
    let pass = biae::forward(params, input);
    let (grads, _) = biae::backward(params, input, &pass, targets, lambda);
    let analytic = grads.groups();
    let mut out = Vec::new();
    for (g, (name, values)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..values.len() {
            let mut plus = params.clone();
            plus.groups_mut()[g].1[k] += FD_STEP;
            let mut minus = params.clone();
            minus.groups_mut()[g].1[k] -= FD_STEP;
            let numeric = (joint(&plus, input, targets, lambda) - joint(&minus, input, targets, lambda)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(values[k], numeric));
        }
        out.push((*name, worst));
    }
    out
}

/// Max relative error of the gradients w.r.t. the encoded inputs.
pub fn input_gradient_error(params: &BiaeParams, input: &EncodedDialogue, targets: &Targets, lambda: f64) -> f64 {
    let pass = biae::forward(params, input);
    let (_, g) = biae::backward(params, input, &pass, targets, lambda);
    let mut worst: f64 = 0.0;
    let mut probe = |analytic: f64, perturb: &dyn Fn(&mut EncodedDialogue, f64)| {
        let mut plus = input.clone();
        perturb(&mut plus, FD_STEP);
        let mut minus = input.clone();
        perturb(&mut minus, -FD_STEP);
        let numeric = (joint(params, &plus, targets, lambda) - joint(params, &minus, targets, lambda)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic, numeric));
    };
    for ((i, k), &a) in g.hypotheses.indexed_iter() {
        probe(a, &|x: &mut EncodedDialogue, h| x.hypotheses[[i, k]] += h);
    }
    for ((j, k), &a) in g.premises.indexed_iter() {
        probe(a, &|x: &mut EncodedDialogue, h| x.premises[[j, k]] += h);
    }
    for (k, &a) in g.question.indexed_iter() {
        probe(a, &|x: &mut EncodedDialogue, h| x.question[k] += h);
    }
    worst
}

struct Table {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingOracle for Table {
    fn name(&self) -> String {
        "table".into()
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn embed(&self, text: &str) -> Vec<f64> {
        self.vectors[text].clone()
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum()
}

/// The index i whose similarity is at least every other and strictly
/// greater than every earlier one.
fn brute_force(sims: &[f64]) -> usize {
    (0..sims.len())
        .find(|&i| sims.iter().all(|&s| s <= sims[i]) && sims[..i].iter().all(|&s| s < sims[i]))
        .expect("a maximum exists")
}

/// Checks `align_labels` and `entailment_labels` on `cases` random sets
/// against the brute-force oracle; returns the number of tied premises seen.
pub fn weak_label_trial(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tie_cases = 0;
    for case in 0..cases {
        let m = rng.random_range(1..=6);
        let n = rng.random_range(0..=4);
        let dim = 6;
        let mut vectors = HashMap::new();
        let hypotheses: Vec<Hypothesis> = (0..m)
            .map(|i| Hypothesis {
                index: i,
                text: format!("h{i}"),
                span: (0, 0),
            })
            .collect();
        let mut hyp_vecs: Vec<Vec<f64>> = Vec::new();
        for i in 0..m {
            // duplicate an earlier hypothesis vector now and then to force ties
            let v = if i > 0 && rng.random_bool(0.3) {
                hyp_vecs[rng.random_range(0..i)].clone()
            } else {
                unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            };
            hyp_vecs.push(v.clone());
            vectors.insert(format!("h{i}"), v);
        }
        let scenario: Vec<String> = (0..rng.random_range(0..=n)).map(|j| format!("s{j}")).collect();
        let turns: Vec<HistoryTurn> = (scenario.len()..n)
            .map(|j| {
                let a = if rng.random_bool(0.5) { TurnAnswer::Yes } else { TurnAnswer::No };
                HistoryTurn::new(format!("q{j}?"), a)
            })
            .collect();
        let premises = build_premise_set(&scenario, &turns);
        let mut premise_vecs = Vec::new();
        for p in &premises {
            let v = match rng.random_range(0..4) {
                // equal to some hypothesis, possibly a duplicated one
                0 => hyp_vecs[rng.random_range(0..m)].clone(),
                // orthogonal to everything: all similarities tie at zero
                1 if m < dim => {
                    let mut v = vec![0.0; dim];
                    v[dim - 1] = 1.0;
                    for h in &hyp_vecs {
                        let dot: f64 = h.iter().zip(&v).map(|(a, b)| a * b).sum();
                        if dot != 0.0 {
                            v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                            break;
                        }
                    }
                    unit(v)
                }
                _ => unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
            };
            premise_vecs.push(v.clone());
            vectors.insert(p.text.clone(), v);
        }
        let oracle = Table { dim, vectors };
        let labels = align_labels(&hypotheses, &premises, &oracle).unwrap();
        assert_eq!(labels.premise_to_hypothesis.len(), n);
        for (j, pv) in premise_vecs.iter().enumerate() {
            let sims: Vec<f64> = hyp_vecs.iter().map(|h| oracle_cosine(h, pv)).collect();
            let expected = brute_force(&sims);
            if sims.iter().filter(|&&s| s == sims[expected]).count() > 1 {
                tie_cases += 1;
            }
            assert_eq!(labels.premise_to_hypothesis[j], expected, "case {case}, premise {j}, sims {sims:?}");
        }
        for row in labels.row_targets.values() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        let entail = entailment_labels(&hypotheses, &premises, &labels).unwrap();
        assert_eq!(entail.pairs.len(), m * n, "full columns for every labelled premise");
        let non_neutral: Vec<_> = entail.pairs.iter().filter(|p| p.state != EntailmentState::Neutral).collect();
        assert_eq!(non_neutral.len(), n, "one non-neutral pair per premise");
        for pair in non_neutral {
            assert_eq!(pair.hypothesis, labels.premise_to_hypothesis[pair.premise]);
            let premise = &premises[pair.premise];
            let expected = match premise.source {
                PremiseSource::Scenario => EntailmentState::Entailment,
                PremiseSource::Turn => match turns[premise.turn_ref.unwrap()].follow_up_answer {
                    TurnAnswer::Yes => EntailmentState::Entailment,
                    TurnAnswer::No => EntailmentState::Contradiction,
                },
            };
            assert_eq!(pair.state, expected);
        }
    }
    tie_cases
}

#[derive(Deserialize)]
pub struct BleuPair {
    pub candidate: String,
    pub reference: String,
}

/// Pairs and scores recorded from an external BLEU implementation.
#[derive(Deserialize)]
pub struct BleuFixture {
    pub pairs: Vec<BleuPair>,
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub subsets: BTreeMap<String, (usize, usize)>,
}

pub fn bleu_fixture() -> BleuFixture {
    serde_json::from_str(include_str!("../fixtures/bleu_reference.json")).unwrap()
}

pub fn words(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

/// Straight-line BLEU: clipped counts by repeated linear scans.
pub fn naive_bleu(cands: &[Vec<String>], refs: &[Vec<String>], n_max: usize) -> f64 {
    let mut log_sum = 0.0;
    let mut any_unigram = false;
    for n in 1..=n_max {
        let (mut hit, mut total) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            if c.len() < n {
                continue;
            }
            let r_grams: Vec<&[String]> = if r.len() >= n { r.windows(n).collect() } else { vec![] };
            let mut used = vec![false; r_grams.len()];
            for g in c.windows(n) {
                total += 1;
                if let Some(k) = (0..r_grams.len()).find(|&k| !used[k] && r_grams[k] == g) {
                    used[k] = true;
                    hit += 1;
                }
            }
        }
        if n == 1 {
            any_unigram = hit > 0;
        }
        let p = if hit == 0 { BLEU_SMOOTHING_EPSILON } else { hit as f64 / total as f64 };
        log_sum += p.ln();
    }
    if !any_unigram {
        return 0.0;
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * (log_sum / n_max as f64).exp()
}

pub struct AccuracyCase {
    pub pred: Vec<DecisionLabel>,
    pub gold: Vec<DecisionLabel>,
    pub micro: f64,
    pub macro_: f64,
    pub per_class: Vec<(DecisionLabel, f64)>,
}

/// Five prediction sets with hand-computed micro, macro and class-wise values.
pub fn accuracy_cases() -> Vec<AccuracyCase> {
    let case = |pred: Vec<DecisionLabel>, gold, micro, macro_, per_class| AccuracyCase {
        pred,
        gold,
        micro,
        macro_,
        per_class,
    };
    vec![
        case(vec![Yes, No, More, Irrelevant], vec![Yes, No, More, Irrelevant], 1.0, 1.0,
             vec![(Irrelevant, 1.0), (Yes, 1.0), (No, 1.0), (More, 1.0)]),
        case(vec![Yes, Yes, Yes, No], vec![Yes, Yes, No, No], 0.75, 0.75, vec![(Yes, 1.0), (No, 0.5)]),
        case(vec![No, No], vec![Yes, No], 0.5, 0.5, vec![(Yes, 0.0), (No, 1.0)]),
        // YES recall 2/3, MORE recall 0/1: macro = (2/3 + 0) / 2
        case(vec![Yes, Yes, No, Yes], vec![Yes, Yes, Yes, More], 0.5, 1.0 / 3.0, vec![(Yes, 2.0 / 3.0), (More, 0.0)]),
        // IRRELEVANT 1/1, YES 1/2, NO 0/1, MORE 2/2: micro 4/6, macro 2.5/4
        case(vec![Irrelevant, Yes, More, Yes, More, More], vec![Irrelevant, Yes, Yes, No, More, More], 4.0 / 6.0, 0.625,
             vec![(Irrelevant, 1.0), (Yes, 0.5), (No, 0.0), (More, 1.0)]),
    ]
}

/// Returns `script[k]` on the k-th decision for a session (by history
/// length), repeating the last entry once the script runs out.
pub struct Scripted(pub Vec<DecisionLabel>);

impl DecisionMaker for Scripted {
    fn decide(&self, _: &str, _: &str, _: &str, history: &[HistoryTurn]) -> Result<Prediction> {
        let decision = *self.0.get(history.len()).or(self.0.last()).unwrap();
        let mut logits = vec![0.0, 0.3, 0.1, 0.0];
        logits[decision.index()] = 2.0;
        let z: f64 = logits.iter().map(|x: &f64| x.exp()).sum();
        Ok(Prediction {
            decision,
            probabilities: logits.iter().map(|x| x.exp() / z).collect(),
            logits,
            attention: vec![1.0],
            alignment: vec![vec![1.0; history.len().min(1)]],
            hypotheses: vec!["h".into()],
            premises: history.iter().map(|t| t.follow_up_question.clone()).collect(),
            hypothesis_states: vec![],
            dropped_hypotheses: 0,
            follow_up_question: None,
        })
    }
}

/// Asks question k on the k-th call, or the same question every time.
pub struct Questions {
    pub looping: bool,
}

impl QuestionGenerator for Questions {
    fn name(&self) -> &str {
        "scripted"
    }
    fn max_output_length(&self) -> usize {
        20
    }
    fn generate_raw(&self, _: &str, asked: &[String]) -> Result<String> {
        Ok(if self.looping {
            "Are you  a RESIDENT".into()
        } else {
            format!("Is condition {} met", asked.len())
        })
    }
}
