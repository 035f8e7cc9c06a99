//! Decision-model training: Adam with linear warmup and decay over BiAE
//! parameters and the toy encoder's affine layer.

use ndarray::{Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biae::{backward, forward, losses, BiaeParams, LossBreakdown, Targets, DEFAULT_LAMBDA};
use crate::checkpoint::{Checkpoint, CheckpointMetadata};
use crate::corpus::DialogueInstance;
use crate::encoder::{build_input, encoder_by_name, EncodedDialogue, ToyEncoder, DEFAULT_MAX_LENGTH};
use crate::error::{Error, Result};
use crate::segmenter::{segment_dialogue, RuleSegmenter, Segmenter};
use crate::weak_labels::LabelCache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub encoder_name: String,
    pub oracle_name: String,
    pub max_length: usize,
    /// Overrides `epochs` when set.
    pub max_steps: Option<usize>,
    /// Whether the encoder's affine layer is updated.
    pub train_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            learning_rate: 5e-5,
            epochs: 5,
            batch_size: 20,
            dropout: 0.3,
            warmup_fraction: 0.1,
            seed: 42,
            encoder_name: "toy:42:64".into(),
            oracle_name: "bow:256".into(),
            max_length: DEFAULT_MAX_LENGTH,
            max_steps: None,
            train_encoder: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive");
        }
        if self.max_length < 4 {
            return bad("max_length must be at least 4");
        }
        Ok(())
    }

    pub fn encoder(&self) -> Result<ToyEncoder> {
        Ok(encoder_by_name(&self.encoder_name)?.with_max_length(self.max_length))
    }
}

/// An instance with its encoder input precomputed before the affine layer.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub utterance_id: String,
    pub raw: EncodedDialogue,
    pub targets: Targets,
}

/// Segments, encodes and attaches weak labels; fails on the first
/// instance missing from the label cache.
pub fn prepare_examples(
    instances: &[DialogueInstance],
    cache: &LabelCache,
    oracle_name: &str,
    encoder: &ToyEncoder,
    segmenter: &dyn Segmenter,
) -> Result<Vec<TrainingExample>> {
    instances
        .par_iter()
        .map(|inst| {
            let record = cache.require(&inst.utterance_id, oracle_name)?;
            let seg = segment_dialogue(&inst.document, &inst.scenario, &inst.history, segmenter)?;
            if record.hypotheses != seg.hypotheses.len() || record.premise_to_hypothesis.len() != seg.premises.len() {
                return Err(Error::validation(format!(
                    "label record for {} does not match its segmentation; rebuild the label cache",
                    inst.utterance_id
                )));
            }
            let marked = build_input(&seg.hypotheses, &inst.question, &seg.premises, encoder.max_length)?;
            let raw = encoder.encode_raw(&marked)?;
            let (alignment, kept) = record.alignment().restricted_to(raw.m());
            let entailment = record.entailment().restricted_to(raw.m(), &kept);
            Ok(TrainingExample {
                utterance_id: inst.utterance_id.clone(),
                raw,
                targets: Targets {
                    decision: inst.gold_decision,
                    alignment: Some(alignment),
                    entailment: Some(entailment),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub learning_rate: f64,
    pub loss: LossBreakdown,
    /// Decision accuracy on the step's batch.
    pub batch_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: BiaeParams,
    pub encoder: ToyEncoder,
    pub curve: Vec<StepRecord>,
}

/// Trains with the rule segmenter on cached weak labels and packs the
/// result into a checkpoint.
pub fn train_with_labels(
    instances: &[DialogueInstance],
    cache: &LabelCache,
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<StepRecord>)> {
    config.validate()?;
    let segmenter = RuleSegmenter;
    let encoder = config.encoder()?;
    let examples = prepare_examples(instances, cache, &config.oracle_name, &encoder, &segmenter)?;
    let outcome = train(&examples, encoder, config)?;
    let metadata = CheckpointMetadata {
        segmenter: segmenter.descriptor(),
        oracle: config.oracle_name.clone(),
        hypothesis_marker: "hashed-token".into(),
        initialization: "glorot-uniform weights, zero biases, seeded unit-norm state vectors".into(),
        steps: outcome.curve.len(),
        final_loss: outcome.curve.last().map(|s| s.loss.total),
    };
    let ckpt = Checkpoint::new(&outcome.params, &outcome.encoder, config, metadata);
    Ok((ckpt, outcome.curve))
}

/// Linear warmup to the base rate, then linear decay towards zero.
pub fn scheduled_rate(base: f64, step: usize, total: usize, warmup: usize) -> f64 {
    if step < warmup {
        base * (step + 1) as f64 / warmup as f64
    } else {
        base * (total - step) as f64 / (total - warmup) as f64
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(size: usize) -> Self {
        Self {
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grads[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grads[k] * grads[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

fn flatten(params: &BiaeParams, encoder: &ToyEncoder, with_encoder: bool) -> Vec<f64> {
    let mut flat: Vec<f64> = params.groups().into_iter().flat_map(|(_, g)| g.iter().copied()).collect();
    if with_encoder {
        flat.extend(encoder.scale.iter());
        flat.extend(encoder.shift.iter());
    }
    flat
}

fn unflatten(flat: &[f64], params: &mut BiaeParams, encoder: &mut ToyEncoder, with_encoder: bool) {
    let mut it = flat.iter();
    for (_, group) in params.groups_mut() {
        for x in group {
            *x = *it.next().expect("flat vector sized from params");
        }
    }
    if with_encoder {
        for x in encoder.scale.iter_mut().chain(encoder.shift.iter_mut()) {
            *x = *it.next().expect("flat vector sized from params");
        }
    }
}

struct ExampleResult {
    loss: LossBreakdown,
    correct: bool,
    grads: BiaeParams,
    g_scale: Array1<f64>,
    g_shift: Array1<f64>,
}

fn dropout_mask(rows: usize, d: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn((rows, d), |_| if rng.random_bool(p) { 0.0 } else { keep })
}

fn run_example(
    example: &TrainingExample,
    params: &BiaeParams,
    encoder: &ToyEncoder,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ExampleResult> {
    let d = encoder.dim;
    let affine = encoder.apply_affine(&example.raw);
    let (m, n) = (affine.m(), affine.n());
    let masks = (config.dropout > 0.0).then(|| {
        (
            dropout_mask(m, d, config.dropout, rng),
            dropout_mask(1, d, config.dropout, rng).row(0).to_owned(),
            dropout_mask(n, d, config.dropout, rng),
        )
    });
    let input = match &masks {
        Some((mh, mq, mp)) => EncodedDialogue {
            hypotheses: &affine.hypotheses * mh,
            question: &affine.question * mq,
            premises: &affine.premises * mp,
        },
        None => affine,
    };
    let pass = forward(params, &input);
    let loss = losses(&pass, &example.targets, config.lambda)?;
    let correct = pass.outcome.decision == example.targets.decision;
    let (grads, mut g_in) = backward(params, &input, &pass, &example.targets, config.lambda);
    if let Some((mh, mq, mp)) = &masks {
        g_in.hypotheses *= mh;
        g_in.question *= mq;
        g_in.premises *= mp;
    }
    let mut g_scale = Array1::zeros(d);
    let mut g_shift = Array1::zeros(d);
    let mut accumulate = |g: &Array2<f64>, raw: &Array2<f64>| {
        Zip::from(g.rows()).and(raw.rows()).for_each(|gr, rr| {
            g_scale += &(&gr * &rr);
            g_shift += &gr;
        });
    };
    accumulate(&g_in.hypotheses, &example.raw.hypotheses);
    accumulate(&g_in.premises, &example.raw.premises);
    g_scale += &(&g_in.question * &example.raw.question);
    g_shift += &g_in.question;
    Ok(ExampleResult {
        loss,
        correct,
        grads,
        g_scale,
        g_shift,
    })
}

/// Total optimizer steps for `examples` under `config`.
pub fn total_steps(examples: usize, config: &TrainConfig) -> usize {
    config
        .max_steps
        .unwrap_or_else(|| config.epochs * examples.div_ceil(config.batch_size))
}

/// Trains from freshly initialized parameters. Deterministic for a fixed
/// seed: batches are shuffled by a seeded generator, per-example dropout
/// masks come from a stream keyed by (step, position), and batch gradients
/// are reduced in a fixed order.
pub fn train(examples: &[TrainingExample], encoder: ToyEncoder, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::validation("no training examples"));
    }
    if let Some(bad) = examples.iter().find(|e| e.raw.dim() != encoder.dim) {
        return Err(Error::validation(format!(
            "example {} has dimension {} but the encoder has {}",
            bad.utterance_id,
            bad.raw.dim(),
            encoder.dim
        )));
    }
    let mut params = BiaeParams::init(encoder.dim, config.seed);
    let mut encoder = encoder;
    let total = total_steps(examples.len(), config);
    let warmup = (config.warmup_fraction * total as f64).round() as usize;
    let mut flat = flatten(&params, &encoder, config.train_encoder);
    let mut adam = Adam::new(flat.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(total);
    let mut cursor = examples.len();

    for step in 0..total {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(examples.len()) {
            if cursor == examples.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let results: Vec<ExampleResult> = batch
            .par_iter()
            .enumerate()
            .map(|(pos, &k)| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(((step as u64) << 20) | pos as u64);
                run_example(&examples[k], &params, &encoder, config, &mut rng)
            })
            .collect::<Result<_>>()?;

        let scale = 1.0 / results.len() as f64;
        let mut grads = BiaeParams::zeros(encoder.dim);
        let mut g_scale = Array1::<f64>::zeros(encoder.dim);
        let mut g_shift = Array1::<f64>::zeros(encoder.dim);
        let mut mean = LossBreakdown::default();
        let mut correct = 0;
        for r in &results {
            grads.add_scaled(&r.grads, scale);
            g_scale.scaled_add(scale, &r.g_scale);
            g_shift.scaled_add(scale, &r.g_shift);
            mean.decision += r.loss.decision * scale;
            mean.alignment += r.loss.alignment * scale;
            mean.entailment += r.loss.entailment * scale;
            mean.total += r.loss.total * scale;
            correct += usize::from(r.correct);
        }
        if !mean.total.is_finite() {
            return Err(Error::Internal(format!("non-finite loss at step {step}")));
        }
        let mut grad_flat = flatten(&grads, &encoder, false);
        if config.train_encoder {
            grad_flat.extend(g_scale.iter());
            grad_flat.extend(g_shift.iter());
        }
        let lr = scheduled_rate(config.learning_rate, step, total, warmup);
        adam.step(&mut flat, &grad_flat, lr);
        unflatten(&flat, &mut params, &mut encoder, config.train_encoder);
        curve.push(StepRecord {
            step,
            learning_rate: lr,
            loss: mean,
            batch_accuracy: correct as f64 / results.len() as f64,
        });
        if step % 50 == 0 {
            tracing::debug!(step, loss = mean.total, lr, "train step");
        }
    }
    Ok(TrainOutcome { params, encoder, curve })
}

/// Moving average with window `w` (one value per full window).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || values.len() < w {
        return Vec::new();
    }
    let mut sum: f64 = values[..w].iter().sum();
    let mut out = vec![sum / w as f64];
    for k in w..values.len() {
        sum += values[k] - values[k - w];
        out.push(sum / w as f64);
    }
    out
}
