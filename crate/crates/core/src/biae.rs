//! The decision module: bipartite alignment, many-to-many entailment,
//! attention pooling and the four-way decision head, with hand-derived
//! gradients for the joint loss.
//!
//! Shapes, for `m` hypotheses, `n` premises and hidden size `d`:
//!
//! ```text
//! align logits   Â[i,j] = w_align · [d_i; u_j] + b_align         A = row softmax(Â)      m × n
//! entail logits  Ê[i,j] = W_entail [d_i; u_j; d_i-u_j; d_i∘u_j] + b_entail
//!                E[i,j] = softmax(Ê[i,j])                                                 m × n × 3
//! state vector   e_i    = Σ_j A[i,j] Σ_K E[i,j,K] e_K                                     m × d
//! attention      a      = softmax(w_attn · [d_i; e_i] + b_attn)                           m
//! summary        s      = Σ_i a_i [d_i; e_i]                                              2d
//! decision       p      = W_decision [u_q; s] + b_decision                                4
//! ```

use ndarray::{s, Array1, Array2, Array3, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DecisionLabel;
use crate::encoder::EncodedDialogue;
use crate::error::{Error, Result};
use crate::weak_labels::{AlignmentLabels, EntailmentLabels, EntailmentState};

/// Probability floor inside the cross-entropy logarithm.
pub const PROB_EPSILON: f64 = 1e-12;

pub const DEFAULT_LAMBDA: f64 = 2.0;

/// All trainable parameters of the decision module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiaeParams {
    pub w_align: Array1<f64>,
    pub b_align: f64,
    pub w_entail: Array2<f64>,
    pub b_entail: Array1<f64>,
    pub e_entail: Array1<f64>,
    pub e_contradict: Array1<f64>,
    pub e_neutral: Array1<f64>,
    pub w_attn: Array1<f64>,
    pub b_attn: f64,
    pub w_decision: Array2<f64>,
    pub b_decision: Array1<f64>,
}

/// Parameter group names, in storage order.
pub const PARAM_GROUPS: [&str; 11] = [
    "w_align",
    "b_align",
    "w_entail",
    "b_entail",
    "e_entail",
    "e_contradict",
    "e_neutral",
    "w_attn",
    "b_attn",
    "w_decision",
    "b_decision",
];

/// `31d + 9`: alignment `2d+1`, entailment `12d+3`, state vectors `3d`,
/// attention `2d+1`, decision `12d+4`.
pub fn parameter_count(d: usize) -> usize {
    31 * d + 9
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> f64 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    rng.random_range(-limit..limit)
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

impl BiaeParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_align: Array1::zeros(2 * d),
            b_align: 0.0,
            w_entail: Array2::zeros((3, 4 * d)),
            b_entail: Array1::zeros(3),
            e_entail: Array1::zeros(d),
            e_contradict: Array1::zeros(d),
            e_neutral: Array1::zeros(d),
            w_attn: Array1::zeros(2 * d),
            b_attn: 0.0,
            w_decision: Array2::zeros((4, 3 * d)),
            b_decision: Array1::zeros(4),
        }
    }

    /// Fan-average uniform weights, zero biases, unit-norm state vectors.
    pub fn init(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(d);
        p.w_align.mapv_inplace(|_| glorot(&mut rng, 2 * d, 1));
        p.w_entail.mapv_inplace(|_| glorot(&mut rng, 4 * d, 3));
        p.e_entail = unit_vector(&mut rng, d);
        p.e_contradict = unit_vector(&mut rng, d);
        p.e_neutral = unit_vector(&mut rng, d);
        p.w_attn.mapv_inplace(|_| glorot(&mut rng, 2 * d, 1));
        p.w_decision.mapv_inplace(|_| glorot(&mut rng, 3 * d, 4));
        p
    }

    pub fn dim(&self) -> usize {
        self.e_entail.len()
    }

    fn state(&self, k: usize) -> &Array1<f64> {
        match k {
            0 => &self.e_entail,
            1 => &self.e_contradict,
            _ => &self.e_neutral,
        }
    }

    fn state_mut(&mut self, k: usize) -> &mut Array1<f64> {
        match k {
            0 => &mut self.e_entail,
            1 => &mut self.e_contradict,
            _ => &mut self.e_neutral,
        }
    }

    /// Every parameter array as a flat slice, in [`PARAM_GROUPS`] order.
    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_align", self.w_align.as_slice().expect("contiguous")),
            ("b_align", std::slice::from_ref(&self.b_align)),
            ("w_entail", self.w_entail.as_slice().expect("contiguous")),
            ("b_entail", self.b_entail.as_slice().expect("contiguous")),
            ("e_entail", self.e_entail.as_slice().expect("contiguous")),
            ("e_contradict", self.e_contradict.as_slice().expect("contiguous")),
            ("e_neutral", self.e_neutral.as_slice().expect("contiguous")),
            ("w_attn", self.w_attn.as_slice().expect("contiguous")),
            ("b_attn", std::slice::from_ref(&self.b_attn)),
            ("w_decision", self.w_decision.as_slice().expect("contiguous")),
            ("b_decision", self.b_decision.as_slice().expect("contiguous")),
        ]
    }

    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_align", self.w_align.as_slice_mut().expect("contiguous")),
            ("b_align", std::slice::from_mut(&mut self.b_align)),
            ("w_entail", self.w_entail.as_slice_mut().expect("contiguous")),
            ("b_entail", self.b_entail.as_slice_mut().expect("contiguous")),
            ("e_entail", self.e_entail.as_slice_mut().expect("contiguous")),
            ("e_contradict", self.e_contradict.as_slice_mut().expect("contiguous")),
            ("e_neutral", self.e_neutral.as_slice_mut().expect("contiguous")),
            ("w_attn", self.w_attn.as_slice_mut().expect("contiguous")),
            ("b_attn", std::slice::from_mut(&mut self.b_attn)),
            ("w_decision", self.w_decision.as_slice_mut().expect("contiguous")),
            ("b_decision", self.b_decision.as_slice_mut().expect("contiguous")),
        ]
    }

    /// Number of scalars, counted from the arrays themselves.
    pub fn scalar_count(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, group by group.
    pub fn add_scaled(&mut self, other: &BiaeParams, scale: f64) {
        for ((_, dst), (_, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|x| (x - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Gradient w.r.t. softmax logits given the gradient w.r.t. its output.
fn softmax_backward(probs: ArrayView1<f64>, grad_out: ArrayView1<f64>) -> Array1<f64> {
    let inner = probs.dot(&grad_out);
    Array1::from_shape_fn(probs.len(), |k| probs[k] * (grad_out[k] - inner))
}

/// `-Σ target_k ln(max(predicted_k, ε))`.
pub fn cross_entropy(predicted: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::validation(format!(
            "cross-entropy length mismatch: {} vs {}",
            predicted.len(),
            target.len()
        )));
    }
    Ok(-predicted
        .iter()
        .zip(target.iter())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(PROB_EPSILON).ln())
        .sum::<f64>())
}

/// Gradient of [`cross_entropy`] w.r.t. `predicted`.
fn cross_entropy_grad(predicted: ArrayView1<f64>, target: ArrayView1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(predicted.len(), |k| {
        if target[k] != 0.0 && predicted[k] > PROB_EPSILON {
            -target[k] / predicted[k]
        } else {
            0.0
        }
    })
}

fn one_hot(len: usize, index: usize) -> Array1<f64> {
    let mut v = Array1::zeros(len);
    v[index] = 1.0;
    v
}

/// Row-stochastic alignment matrix. Returns an `m × 0` matrix when there are no premises.
pub fn alignment_scores(hypotheses: &Array2<f64>, premises: &Array2<f64>, params: &BiaeParams) -> Array2<f64> {
    let d = params.dim();
    let (m, n) = (hypotheses.nrows(), premises.nrows());
    if n == 0 {
        return Array2::zeros((m, 0));
    }
    let hyp_part = hypotheses.dot(&params.w_align.slice(s![..d]));
    let prem_part = premises.dot(&params.w_align.slice(s![d..]));
    let mut a = Array2::zeros((m, n));
    for i in 0..m {
        let logits = Array1::from_shape_fn(n, |j| hyp_part[i] + prem_part[j] + params.b_align);
        a.row_mut(i).assign(&softmax(logits.view()));
    }
    a
}

/// `[d_i; u_j; d_i - u_j; d_i ∘ u_j]`.
pub fn pair_features(hyp: ArrayView1<f64>, prem: ArrayView1<f64>) -> Array1<f64> {
    let d = hyp.len();
    let mut f = Array1::zeros(4 * d);
    f.slice_mut(s![..d]).assign(&hyp);
    f.slice_mut(s![d..2 * d]).assign(&prem);
    f.slice_mut(s![2 * d..3 * d]).assign(&(&hyp - &prem));
    f.slice_mut(s![3 * d..]).assign(&(&hyp * &prem));
    f
}

/// Entailment state probabilities, `m × n × 3` in (E, C, N) order.
pub fn entailment_probs(hypotheses: &Array2<f64>, premises: &Array2<f64>, params: &BiaeParams) -> Array3<f64> {
    let (m, n) = (hypotheses.nrows(), premises.nrows());
    let mut e = Array3::zeros((m, n, 3));
    for i in 0..m {
        for j in 0..n {
            let f = pair_features(hypotheses.row(i), premises.row(j));
            let logits = params.w_entail.dot(&f) + &params.b_entail;
            e.slice_mut(s![i, j, ..]).assign(&softmax(logits.view()));
        }
    }
    e
}

/// Per-hypothesis mixing weights `c[i,K] = Σ_j A[i,j] E[i,j,K]`.
pub fn state_coefficients(alignment: &Array2<f64>, entail: &Array3<f64>) -> Array2<f64> {
    let (m, n) = alignment.dim();
    Array2::from_shape_fn((m, 3), |(i, k)| (0..n).map(|j| alignment[[i, j]] * entail[[i, j, k]]).sum())
}

/// Entailment state vectors `e_i`, `m × d`; all zero when there are no premises.
pub fn entailment_state_vectors(alignment: &Array2<f64>, entail: &Array3<f64>, params: &BiaeParams) -> Array2<f64> {
    let coeffs = state_coefficients(alignment, entail);
    states_from_coefficients(&coeffs, params)
}

fn states_from_coefficients(coeffs: &Array2<f64>, params: &BiaeParams) -> Array2<f64> {
    let d = params.dim();
    let mut out = Array2::zeros((coeffs.nrows(), d));
    for i in 0..coeffs.nrows() {
        let mut row = out.row_mut(i);
        for k in 0..3 {
            row.scaled_add(coeffs[[i, k]], params.state(k));
        }
    }
    out
}

fn concat_rows(hypotheses: &Array2<f64>, states: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[hypotheses.view(), states.view()]).expect("matching row counts")
}

/// Attention weights over hypotheses and the pooled `2d` document summary.
pub fn document_summary(hypotheses: &Array2<f64>, states: &Array2<f64>, params: &BiaeParams) -> (Array1<f64>, Array1<f64>) {
    let joined = concat_rows(hypotheses, states);
    let logits = joined.dot(&params.w_attn) + params.b_attn;
    let attention = softmax(logits.view());
    let summary = attention.dot(&joined);
    (attention, summary)
}

fn argmax_low_tie(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for k in 1..values.len() {
        if values[k] > values[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
    pub decision: DecisionLabel,
    pub attention: Array1<f64>,
    pub summary: Array1<f64>,
    pub states: Array2<f64>,
}

impl DecisionOutcome {
    /// The highest-scoring class among IRRELEVANT, YES and NO.
    pub fn best_terminal(&self) -> DecisionLabel {
        DecisionLabel::from_index(argmax_low_tie(self.logits.slice(s![..3]))).expect("index < 3")
    }
}

/// Decision logits and probabilities from the question vector and summary.
/// `attention` and `states` are carried through unchanged.
pub fn decision_logits(
    question: &Array1<f64>,
    summary: &Array1<f64>,
    params: &BiaeParams,
    attention: Array1<f64>,
    states: Array2<f64>,
) -> DecisionOutcome {
    let z = ndarray::concatenate![ndarray::Axis(0), question.view(), summary.view()];
    let logits = params.w_decision.dot(&z) + &params.b_decision;
    let probabilities = softmax(logits.view());
    let decision = DecisionLabel::from_index(argmax_low_tie(logits.view())).expect("four classes");
    DecisionOutcome {
        logits,
        probabilities,
        decision,
        attention,
        summary: summary.clone(),
        states,
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub alignment: Array2<f64>,
    pub entailment: Array3<f64>,
    pub coefficients: Array2<f64>,
    pub outcome: DecisionOutcome,
}

pub fn forward(params: &BiaeParams, input: &EncodedDialogue) -> ForwardPass {
    let alignment = alignment_scores(&input.hypotheses, &input.premises, params);
    let entailment = entailment_probs(&input.hypotheses, &input.premises, params);
    let coefficients = state_coefficients(&alignment, &entailment);
    let states = states_from_coefficients(&coefficients, params);
    let (attention, summary) = document_summary(&input.hypotheses, &states, params);
    let outcome = decision_logits(&input.question, &summary, params, attention, states);
    ForwardPass {
        alignment,
        entailment,
        coefficients,
        outcome,
    }
}

/// Cross-entropy summed over hypotheses that have an alignment target.
pub fn alignment_loss(alignment: &Array2<f64>, labels: &AlignmentLabels) -> Result<f64> {
    let mut total = 0.0;
    for (&i, target) in &labels.row_targets {
        if i >= alignment.nrows() {
            return Err(Error::validation(format!("alignment target row {i} out of range")));
        }
        total += cross_entropy(alignment.row(i), ArrayView1::from(target.as_slice()))?;
    }
    Ok(total)
}

/// Cross-entropy summed over labeled (hypothesis, premise) pairs.
pub fn entailment_loss(entail: &Array3<f64>, labels: &EntailmentLabels) -> Result<f64> {
    let (m, n, _) = entail.dim();
    let mut total = 0.0;
    for pair in &labels.pairs {
        if pair.hypothesis >= m || pair.premise >= n {
            return Err(Error::validation(format!(
                "entailment pair ({}, {}) out of range",
                pair.hypothesis, pair.premise
            )));
        }
        let target = one_hot(3, pair.state.index());
        total += cross_entropy(entail.slice(s![pair.hypothesis, pair.premise, ..]), target.view())?;
    }
    Ok(total)
}

pub fn decision_loss(probabilities: &Array1<f64>, gold: DecisionLabel) -> f64 {
    cross_entropy(probabilities.view(), one_hot(4, gold.index()).view()).expect("length 4")
}

pub fn joint_loss(decision: f64, alignment: f64, entailment: f64, lambda: f64) -> f64 {
    lambda * decision + alignment + entailment
}

/// Supervision for one instance. Missing weak labels contribute no loss.
#[derive(Debug, Clone)]
pub struct Targets {
    pub decision: DecisionLabel,
    pub alignment: Option<AlignmentLabels>,
    pub entailment: Option<EntailmentLabels>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub decision: f64,
    pub alignment: f64,
    pub entailment: f64,
    pub total: f64,
}

pub fn losses(pass: &ForwardPass, targets: &Targets, lambda: f64) -> Result<LossBreakdown> {
    let decision = decision_loss(&pass.outcome.probabilities, targets.decision);
    let n = pass.alignment.ncols();
    let (alignment, entailment) = if n == 0 {
        (0.0, 0.0)
    } else {
        let a = match &targets.alignment {
            Some(l) => alignment_loss(&pass.alignment, l)?,
            None => 0.0,
        };
        let e = match &targets.entailment {
            Some(l) => entailment_loss(&pass.entailment, l)?,
            None => 0.0,
        };
        (a, e)
    };
    Ok(LossBreakdown {
        decision,
        alignment,
        entailment,
        total: joint_loss(decision, alignment, entailment, lambda),
    })
}

/// Gradients of the joint loss w.r.t. the encoded inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGradients {
    pub hypotheses: Array2<f64>,
    pub question: Array1<f64>,
    pub premises: Array2<f64>,
}

/// Backpropagates the joint loss through one forward pass.
pub fn backward(
    params: &BiaeParams,
    input: &EncodedDialogue,
    pass: &ForwardPass,
    targets: &Targets,
    lambda: f64,
) -> (BiaeParams, InputGradients) {
    let d = params.dim();
    let (m, n) = (input.m(), input.n());
    let mut grads = BiaeParams::zeros(d);
    let mut g_hyp = Array2::<f64>::zeros((m, d));
    let mut g_prem = Array2::<f64>::zeros((n, d));
    let out = &pass.outcome;

    // decision head
    let g_probs = cross_entropy_grad(out.probabilities.view(), one_hot(4, targets.decision.index()).view()) * lambda;
    let g_logits = softmax_backward(out.probabilities.view(), g_probs.view());
    let z = ndarray::concatenate![ndarray::Axis(0), input.question.view(), out.summary.view()];
    for c in 0..4 {
        grads.w_decision.row_mut(c).scaled_add(g_logits[c], &z);
    }
    grads.b_decision.assign(&g_logits);
    let g_z = params.w_decision.t().dot(&g_logits);
    let g_question = g_z.slice(s![..d]).to_owned();
    let g_summary = g_z.slice(s![d..]);

    // attention pooling
    let joined = concat_rows(&input.hypotheses, &out.states);
    let g_attention = joined.dot(&g_summary);
    let g_attn_logits = softmax_backward(out.attention.view(), g_attention.view());
    let mut g_joined = Array2::<f64>::zeros((m, 2 * d));
    for i in 0..m {
        let mut row = g_joined.row_mut(i);
        row.scaled_add(out.attention[i], &g_summary);
        row.scaled_add(g_attn_logits[i], &params.w_attn);
        grads.w_attn.scaled_add(g_attn_logits[i], &joined.row(i));
    }
    grads.b_attn = g_attn_logits.sum();
    g_hyp += &g_joined.slice(s![.., ..d]);
    let g_states = g_joined.slice(s![.., d..]);

    if n > 0 {
        // state vectors e_i = Σ_K c[i,K] e_K
        let mut g_coeffs = Array2::<f64>::zeros((m, 3));
        for k in 0..3 {
            let state = params.state(k);
            for i in 0..m {
                g_coeffs[[i, k]] = state.dot(&g_states.row(i));
            }
            let g_state = pass.coefficients.column(k).dot(&g_states);
            grads.state_mut(k).assign(&g_state);
        }

        // c[i,K] = Σ_j A[i,j] E[i,j,K]
        let mut g_align = Array2::<f64>::zeros((m, n));
        let mut g_entail = Array3::<f64>::zeros((m, n, 3));
        for i in 0..m {
            for j in 0..n {
                for k in 0..3 {
                    g_align[[i, j]] += g_coeffs[[i, k]] * pass.entailment[[i, j, k]];
                    g_entail[[i, j, k]] += pass.alignment[[i, j]] * g_coeffs[[i, k]];
                }
            }
        }

        if let Some(labels) = &targets.entailment {
            for pair in &labels.pairs {
                let target = one_hot(3, pair.state.index());
                let probs = pass.entailment.slice(s![pair.hypothesis, pair.premise, ..]);
                let g = cross_entropy_grad(probs, target.view());
                let mut slot = g_entail.slice_mut(s![pair.hypothesis, pair.premise, ..]);
                slot += &g;
            }
        }
        if let Some(labels) = &targets.alignment {
            for (&i, target) in &labels.row_targets {
                let g = cross_entropy_grad(pass.alignment.row(i), ArrayView1::from(target.as_slice()));
                let mut row = g_align.row_mut(i);
                row += &g;
            }
        }

        // entailment logits through the pair features
        for i in 0..m {
            for j in 0..n {
                let probs = pass.entailment.slice(s![i, j, ..]);
                let g_logit = softmax_backward(probs, g_entail.slice(s![i, j, ..]));
                let (hyp, prem) = (input.hypotheses.row(i), input.premises.row(j));
                let f = pair_features(hyp, prem);
                for k in 0..3 {
                    grads.w_entail.row_mut(k).scaled_add(g_logit[k], &f);
                }
                grads.b_entail += &g_logit;
                let g_f = params.w_entail.t().dot(&g_logit);
                let (g_h, g_p, g_diff, g_prod) = (
                    g_f.slice(s![..d]),
                    g_f.slice(s![d..2 * d]),
                    g_f.slice(s![2 * d..3 * d]),
                    g_f.slice(s![3 * d..]),
                );
                let mut gh = g_hyp.row_mut(i);
                gh += &g_h;
                gh += &g_diff;
                gh += &(&g_prod * &prem);
                let mut gp = g_prem.row_mut(j);
                gp += &g_p;
                gp -= &g_diff;
                gp += &(&g_prod * &hyp);
            }
        }

        // alignment logits
        let w_h = params.w_align.slice(s![..d]);
        let w_p = params.w_align.slice(s![d..]);
        for i in 0..m {
            let g_logit = softmax_backward(pass.alignment.row(i), g_align.row(i));
            for j in 0..n {
                let g = g_logit[j];
                grads.w_align.slice_mut(s![..d]).scaled_add(g, &input.hypotheses.row(i));
                grads.w_align.slice_mut(s![d..]).scaled_add(g, &input.premises.row(j));
                grads.b_align += g;
                g_hyp.row_mut(i).scaled_add(g, &w_h);
                g_prem.row_mut(j).scaled_add(g, &w_p);
            }
        }
    }

    (
        grads,
        InputGradients {
            hypotheses: g_hyp,
            question: g_question,
            premises: g_prem,
        },
    )
}

/// Per-hypothesis predicted entailment state: the argmax of the aggregated
/// mass `Σ_j A[i,j] E[i,j,K]`, ties resolved to NEUTRAL.
pub fn predicted_hypothesis_states(alignment: &Array2<f64>, entail: &Array3<f64>) -> Vec<EntailmentState> {
    let m = alignment.nrows();
    if alignment.ncols() == 0 {
        return vec![EntailmentState::Neutral; m];
    }
    let coeffs = state_coefficients(alignment, entail);
    (0..m)
        .map(|i| {
            let (e, c, n) = (coeffs[[i, 0]], coeffs[[i, 1]], coeffs[[i, 2]]);
            if e > c && e > n {
                EntailmentState::Entailment
            } else if c > e && c > n {
                EntailmentState::Contradiction
            } else {
                EntailmentState::Neutral
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_input(m: usize, n: usize, d: usize, seed: u64) -> EncodedDialogue {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncodedDialogue {
            hypotheses: Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0)),
            question: Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0)),
            premises: Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(1024), 31_753);
        assert_eq!(parameter_count(768), 23_817);
        assert_eq!(parameter_count(1), 40);
        for d in [1, 2, 8, 768] {
            assert_eq!(BiaeParams::zeros(d).scalar_count(), parameter_count(d));
        }
    }

    #[test]
    fn zero_alignment_weights_give_uniform_rows() {
        let input = random_input(3, 4, 5, 1);
        let a = alignment_scores(&input.hypotheses, &input.premises, &BiaeParams::zeros(5));
        assert!(a.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let single = random_input(3, 1, 5, 2);
        let a = alignment_scores(&single.hypotheses, &single.premises, &BiaeParams::init(5, 3));
        assert!(a.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_entailment_weights_give_thirds() {
        let input = random_input(2, 3, 4, 4);
        let e = entailment_probs(&input.hypotheses, &input.premises, &BiaeParams::zeros(4));
        assert!(e.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn difference_feature_vanishes_for_equal_vectors() {
        let v = Array1::from(vec![0.5, -1.0, 2.0]);
        let f = pair_features(v.view(), v.view());
        assert!(f.slice(s![6..9]).iter().all(|&x| x == 0.0));
        assert_eq!(f.slice(s![9..]).to_vec(), vec![0.25, 1.0, 4.0]);
    }

    #[test]
    fn degenerate_weights_select_entailment_vector() {
        let params = BiaeParams::init(4, 9);
        let mut a = Array2::zeros((1, 2));
        a[[0, 1]] = 1.0;
        let mut e = Array3::zeros((1, 2, 3));
        e[[0, 1, 0]] = 1.0;
        e[[0, 0, 2]] = 1.0;
        let states = entailment_state_vectors(&a, &e, &params);
        assert_eq!(states.row(0), params.e_entail.view());
    }

    #[test]
    fn single_hypothesis_summary() {
        let params = BiaeParams::init(3, 5);
        let input = random_input(1, 2, 3, 6);
        let states = Array2::from_shape_fn((1, 3), |(_, k)| k as f64);
        let (a, s) = document_summary(&input.hypotheses, &states, &params);
        assert_eq!(a.to_vec(), vec![1.0]);
        let expected = ndarray::concatenate![ndarray::Axis(0), input.hypotheses.row(0), states.row(0)];
        assert_eq!(s, expected);
    }

    #[test]
    fn zero_attention_weights_average_rows() {
        let mut params = BiaeParams::init(3, 5);
        params.w_attn.fill(0.0);
        let input = random_input(4, 2, 3, 7);
        let states = Array2::zeros((4, 3));
        let (a, s) = document_summary(&input.hypotheses, &states, &params);
        assert!(a.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let mean = input.hypotheses.mean_axis(ndarray::Axis(0)).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(s[k], mean[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn decision_tie_and_bias() {
        let mut params = BiaeParams::zeros(2);
        let q = Array1::zeros(2);
        let s = Array1::zeros(4);
        let out = decision_logits(&q, &s, &params, Array1::zeros(1), Array2::zeros((1, 2)));
        assert_eq!(out.decision, DecisionLabel::Irrelevant);
        assert!(out.probabilities.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        params.b_decision = Array1::from(vec![0.0, 5.0, 0.0, 0.0]);
        let out = decision_logits(&q, &s, &params, Array1::zeros(1), Array2::zeros((1, 2)));
        assert_eq!(out.decision, DecisionLabel::Yes);
        assert_eq!(out.logits.len(), 4);
    }

    #[test]
    fn best_terminal_ignores_more() {
        let mut params = BiaeParams::zeros(2);
        params.b_decision = Array1::from(vec![0.1, 0.3, 0.2, 9.0]);
        let out = decision_logits(&Array1::zeros(2), &Array1::zeros(4), &params, Array1::zeros(1), Array2::zeros((1, 2)));
        assert_eq!(out.decision, DecisionLabel::More);
        assert_eq!(out.best_terminal(), DecisionLabel::Yes);
    }

    #[test]
    fn closed_form_losses() {
        let ln = f64::ln;
        let uniform4 = Array1::from_elem(4, 0.25);
        assert_abs_diff_eq!(decision_loss(&uniform4, DecisionLabel::No), ln(4.0), epsilon = 1e-12);
        let skewed = Array1::from(vec![0.7, 0.1, 0.1, 0.1]);
        assert_abs_diff_eq!(decision_loss(&skewed, DecisionLabel::Irrelevant), -ln(0.7), epsilon = 1e-12);
        assert_abs_diff_eq!(decision_loss(&one_hot(4, 2), DecisionLabel::No), 0.0, epsilon = 1e-9);

        let a = Array2::from_elem((1, 4), 0.25);
        let labels = AlignmentLabels {
            premise_to_hypothesis: vec![0],
            row_targets: [(0, vec![1.0, 0.0, 0.0, 0.0])].into_iter().collect(),
        };
        assert_abs_diff_eq!(alignment_loss(&a, &labels).unwrap(), ln(4.0), epsilon = 1e-12);
        let half = Array2::from_elem((1, 2), 0.5);
        let both = AlignmentLabels::from_mapping(vec![0, 0]);
        assert_abs_diff_eq!(alignment_loss(&half, &both).unwrap(), ln(2.0), epsilon = 1e-12);
        let exact = Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap();
        let first = AlignmentLabels {
            premise_to_hypothesis: vec![0],
            row_targets: [(0, vec![1.0, 0.0])].into_iter().collect(),
        };
        assert_abs_diff_eq!(alignment_loss(&exact, &first).unwrap(), 0.0, epsilon = 1e-9);

        let e = Array3::from_elem((1, 1, 3), 1.0 / 3.0);
        let one = EntailmentLabels {
            pairs: vec![crate::weak_labels::PairLabel {
                hypothesis: 0,
                premise: 0,
                state: EntailmentState::Contradiction,
            }],
        };
        assert_abs_diff_eq!(entailment_loss(&e, &one).unwrap(), ln(3.0), epsilon = 1e-12);
        assert_eq!(entailment_loss(&e, &EntailmentLabels::default()).unwrap(), 0.0);

        assert_eq!(joint_loss(1.0, 1.0, 1.0, 2.0), 4.0);
        assert_eq!(joint_loss(0.0, 0.0, 0.0, 3.5), 0.0);
    }

    #[test]
    fn cross_entropy_edges() {
        let p = Array1::from(vec![0.0, 1.0]);
        let t = Array1::from(vec![1.0, 0.0]);
        assert_abs_diff_eq!(cross_entropy(p.view(), t.view()).unwrap(), 27.631021115928547, epsilon = 1e-9);
        let u = Array1::from_elem(5, 0.2);
        assert_abs_diff_eq!(cross_entropy(u.view(), one_hot(5, 3).view()).unwrap(), 5f64.ln(), epsilon = 1e-12);
        assert!(cross_entropy(u.view(), t.view()).is_err());
    }

    #[test]
    fn no_premises_path() {
        let params = BiaeParams::init(4, 1);
        let input = random_input(3, 0, 4, 2);
        let pass = forward(&params, &input);
        assert_eq!(pass.alignment.dim(), (3, 0));
        assert!(pass.outcome.states.iter().all(|&x| x == 0.0));
        let targets = Targets {
            decision: DecisionLabel::More,
            alignment: Some(AlignmentLabels::from_mapping(vec![])),
            entailment: Some(EntailmentLabels::default()),
        };
        let l = losses(&pass, &targets, 2.0).unwrap();
        assert_eq!((l.alignment, l.entailment), (0.0, 0.0));
        let (g, _) = backward(&params, &input, &pass, &targets, 2.0);
        assert!(g.w_align.iter().all(|&x| x == 0.0));
        assert!(g.e_entail.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn predicted_states() {
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = 1.0;
        a[[1, 1]] = 1.0;
        let mut e = Array3::zeros((2, 2, 3));
        for j in 0..2 {
            e[[0, j, 0]] = 1.0;
            e[[1, j, 2]] = 1.0;
        }
        assert_eq!(
            predicted_hypothesis_states(&a, &e),
            vec![EntailmentState::Entailment, EntailmentState::Neutral]
        );
        let uniform = Array3::from_elem((2, 2, 3), 1.0 / 3.0);
        assert_eq!(predicted_hypothesis_states(&a, &uniform), vec![EntailmentState::Neutral; 2]);
        assert_eq!(
            predicted_hypothesis_states(&Array2::zeros((3, 0)), &Array3::zeros((3, 0, 3))),
            vec![EntailmentState::Neutral; 3]
        );
    }
}
