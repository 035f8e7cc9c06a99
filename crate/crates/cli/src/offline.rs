//! Commands that run in-process: corpus tools, labels, training and
//! evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use biae_core::analysis::{histogram, histogram_svg};
use biae_core::checkpoint::Checkpoint;
use biae_core::config::AppConfig;
use biae_core::corpus::{save_dataset, validate_file, Split, SubsetCounts};
use biae_core::evaluate::{analyze_entailment, predict_all, report};
use biae_core::pipeline::Predictor;
use biae_core::qgen::{augment, natural_generation_set, write_training_file, TemplateGenerator};
use biae_core::segmenter::{segment_dialogue, RuleSegmenter};
use biae_core::synthetic::synthetic_corpus;
use biae_core::train::{train_with_labels, StepRecord};
use biae_core::weak_labels::{audit, load_gold_alignments, oracle_by_name, LabelCache};
use serde::Serialize;
use serde_json::json;

use crate::{
    load_instances, AnalyzeArgs, CorpusCommand, EvalArgs, LabelsCommand, QgenArgs, SegmentArgs, TrainArgs,
};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_labels(path: &Path) -> Result<LabelCache> {
    if !path.exists() {
        bail!("no label file at {}; run `biae labels build` first", path.display());
    }
    LabelCache::load(path).with_context(|| format!("reading labels from {}", path.display()))
}

pub fn corpus(config: &AppConfig, command: CorpusCommand) -> Result<()> {
    match command {
        CorpusCommand::Validate { files } => {
            if files.is_empty() {
                bail!("no files given");
            }
            let mut dirty = 0;
            for path in &files {
                let report = validate_file(path).with_context(|| format!("reading {}", path.display()))?;
                println!("{}: {} records, {} violations", path.display(), report.count, report.violations.len());
                for v in &report.violations {
                    println!("  {v}");
                }
                dirty += usize::from(!report.is_clean());
            }
            if dirty > 0 {
                bail!("{dirty} file(s) failed validation");
            }
            Ok(())
        }
        CorpusCommand::Stats(data) => {
            let instances = load_instances(config, data.split, data.file.as_deref())?;
            print_json(&SubsetCounts::from_instances(&instances))
        }
        CorpusCommand::Synthetic { out } => {
            ensure_parent(&out)?;
            let corpus = synthetic_corpus();
            save_dataset(&out, &corpus)?;
            println!("wrote {} instances to {}", corpus.len(), out.display());
            Ok(())
        }
    }
}

pub fn segment(args: SegmentArgs) -> Result<()> {
    match (args.document, args.file) {
        (Some(document), _) => print_json(&segment_dialogue(&document, &args.scenario, &[], &RuleSegmenter)?),
        (None, Some(file)) => {
            for inst in load_instances(&AppConfig::default(), Split::Dev, Some(&file))? {
                let seg = segment_dialogue(&inst.document, &inst.scenario, &inst.history, &RuleSegmenter)?;
                let line = json!({
                    "utterance_id": inst.utterance_id,
                    "hypotheses": seg.hypotheses,
                    "premises": seg.premises,
                });
                println!("{line}");
            }
            Ok(())
        }
        (None, None) => bail!("give --document or --file"),
    }
}

pub fn labels(config: &AppConfig, command: LabelsCommand) -> Result<()> {
    match command {
        LabelsCommand::Build(args) => {
            let oracle_name = args.oracle.unwrap_or_else(|| config.train.oracle_name.clone());
            let out = args.out.unwrap_or_else(|| config.labels_path.clone());
            let oracle = oracle_by_name(&oracle_name)?;
            let instances = load_instances(config, args.data.split, args.data.file.as_deref())?;
            let fresh = LabelCache::build(&instances, &RuleSegmenter, oracle.as_ref())?;
            let cache = if out.exists() { load_labels(&out)? } else { LabelCache::new() };
            for inst in &instances {
                cache.insert(fresh.require(&inst.utterance_id, &oracle_name)?);
            }
            ensure_parent(&out)?;
            cache.save(&out)?;
            println!("labelled {} instances with {oracle_name}; {} records in {}", instances.len(), cache.len(), out.display());
            Ok(())
        }
        LabelsCommand::Audit { gold, labels, oracle } => {
            let cache = load_labels(&labels.unwrap_or_else(|| config.labels_path.clone()))?;
            let oracle = oracle.unwrap_or_else(|| config.train.oracle_name.clone());
            let gold = load_gold_alignments(&gold)?;
            let agreement = audit(&cache, &oracle, &gold)?;
            print_json(&json!({"oracle": oracle, "documents": gold.len(), "agreement": agreement}))
        }
    }
}

#[derive(Serialize)]
struct CurveRow {
    step: usize,
    learning_rate: f64,
    decision_loss: f64,
    alignment_loss: f64,
    entailment_loss: f64,
    total_loss: f64,
    batch_accuracy: f64,
}

fn write_curve(path: &Path, curve: &[StepRecord]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for s in curve {
        w.serialize(CurveRow {
            step: s.step,
            learning_rate: s.learning_rate,
            decision_loss: s.loss.decision,
            alignment_loss: s.loss.alignment,
            entailment_loss: s.loss.entailment,
            total_loss: s.loss.total,
            batch_accuracy: s.batch_accuracy,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(config: &mut AppConfig, args: TrainArgs) -> Result<()> {
    let t = &mut config.train;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if args.max_steps.is_some() {
        t.max_steps = args.max_steps;
    }
    if let Some(v) = args.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.lambda {
        t.lambda = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.encoder {
        t.encoder_name = v;
    }
    t.validate()?;
    let instances = load_instances(config, args.split, args.file.as_deref())?;
    let cache = load_labels(&args.labels.unwrap_or_else(|| config.labels_path.clone()))?;
    let (ckpt, curve) = train_with_labels(&instances, &cache, &config.train)?;
    let out = args.out.unwrap_or_else(|| config.checkpoint.clone());
    ensure_parent(&out)?;
    ckpt.save(&out)?;
    let curve_path = args.curve.unwrap_or_else(|| out.with_file_name("loss_curve.csv"));
    write_curve(&curve_path, &curve)?;
    let last = curve.last();
    print_json(&json!({
        "checkpoint": out,
        "loss_curve": curve_path,
        "instances": instances.len(),
        "steps": curve.len(),
        "final_loss": last.map(|s| s.loss.total),
        "final_batch_accuracy": last.map(|s| s.batch_accuracy),
        "config_hash": ckpt.config_hash,
    }))
}

fn load_checkpoint(config: &AppConfig, explicit: Option<PathBuf>) -> Result<Checkpoint> {
    let path = explicit.unwrap_or_else(|| config.checkpoint.clone());
    Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn eval(config: &mut AppConfig, args: EvalArgs) -> Result<()> {
    if let Some(g) = args.generator {
        config.serve.generator = g;
    }
    let ckpt = load_checkpoint(config, args.checkpoint)?;
    let generator = biae_server::build_generator(&config.serve, Some(config.split_path(Split::Train)))?;
    let predictor = Predictor::from_checkpoint_with(&ckpt, generator)?;
    let instances = load_instances(config, args.data.split, args.data.file.as_deref())?;
    let rows = predict_all(&predictor, &instances)?;
    let metrics = report(&rows)?;

    let report_path = args
        .report
        .unwrap_or_else(|| config.output_dir.join(format!("metrics_{}.json", args.data.split)));
    write_json(&report_path, &metrics)?;
    let csv_path = report_path.with_extension("csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    print_json(&metrics)?;
    eprintln!("report: {}\npredictions: {}", report_path.display(), csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct HistogramRow {
    bin_low: f64,
    bin_high: f64,
    success: usize,
    fail: usize,
}

pub fn analyze(config: &AppConfig, args: AnalyzeArgs) -> Result<()> {
    if args.bins == 0 {
        bail!("--bins must be positive");
    }
    let ckpt = load_checkpoint(config, args.checkpoint)?;
    let predictor = Predictor::from_checkpoint_with(&ckpt, Arc::new(TemplateGenerator::default()))?;
    let instances = load_instances(config, args.data.split, args.data.file.as_deref())?;
    let cache = load_labels(&args.labels.unwrap_or_else(|| config.labels_path.clone()))?;
    let rows = predict_all(&predictor, &instances)?;
    let analysis = analyze_entailment(&rows, &cache, &ckpt.metadata.oracle)?;

    let out = args.out.unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("entailment_analysis.json"), &analysis)?;

    let alphas = |a: &Option<biae_core::analysis::EntailmentAnalysis>| {
        a.as_ref().map(|a| a.alpha_per_document.clone()).unwrap_or_default()
    };
    let (success, fail) = (alphas(&analysis.success), alphas(&analysis.fail));
    let (hs, hf) = (histogram(&success, args.bins), histogram(&fail, args.bins));
    let table = out.join("alpha_histogram.csv");
    let mut w = csv::Writer::from_path(&table).with_context(|| format!("writing {}", table.display()))?;
    for b in 0..args.bins {
        w.serialize(HistogramRow {
            bin_low: b as f64 / args.bins as f64,
            bin_high: (b + 1) as f64 / args.bins as f64,
            success: hs[b],
            fail: hf[b],
        })?;
    }
    w.flush()?;
    let svg = out.join("alpha_histogram.svg");
    fs::write(&svg, histogram_svg(&[("success", &success), ("fail", &fail)], args.bins))?;

    let summary = |a: &Option<biae_core::analysis::EntailmentAnalysis>| a.as_ref().map(|a| a.summary.clone());
    print_json(&json!({
        "oracle": analysis.oracle,
        "success": summary(&analysis.success),
        "fail": summary(&analysis.fail),
        "skipped": analysis.skipped,
        "outputs": [out.join("entailment_analysis.json"), table, svg],
    }))
}

pub fn qgen_data(config: &AppConfig, args: QgenArgs) -> Result<()> {
    let instances = load_instances(config, args.split, args.file.as_deref())?;
    let mut samples = natural_generation_set(&instances);
    let natural = samples.len();
    if args.augment {
        samples.extend(augment(&instances));
    }
    ensure_parent(&args.out)?;
    write_training_file(&args.out, &samples)?;
    println!("wrote {} samples ({natural} natural) to {}", samples.len(), args.out.display());
    Ok(())
}
