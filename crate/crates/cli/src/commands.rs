use std::collections::{HashMap, HashSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use podintro::augment::{self, AugmentConfig};
use podintro::boundary::{self, BoundaryConfig};
use podintro::chunker::ChunkConfig;
use podintro::corpus::{self, GoldLabel, LabeledDoc, Tolerance, TranscriptDoc};
use podintro::eval;
use podintro::scorer::{self, ModelFile, TrainConfig};
use podintro::splitter::{self, DatasetSplit, SplitRole, SplitSpec};
use podintro::synth::{self, SynthConfig};
use podintro::Error;
use serde_json::json;

use crate::output::{write_atomic, write_json, Run};
use crate::{
    AgreementArgs, AugmentArgs, EvaluateArgs, GoldArgs, ScoreArgs, SegmentArgs, SplitArgs, SubsetArgs,
    SynthArgs, TrainArgs, ValidateArgs,
};

fn load_corpus(path: &Path, run: &mut Run) -> Result<Vec<TranscriptDoc>> {
    run.input(path);
    Ok(corpus::load_corpus(path)?)
}

fn load_split(path: &Path, run: &mut Run) -> Result<DatasetSplit> {
    run.input(path);
    Ok(DatasetSplit::load(path)?)
}

fn gold_map(golds: Vec<GoldLabel>) -> HashMap<String, GoldLabel> {
    golds.into_iter().map(|g| (g.episode_id.clone(), g)).collect()
}

/// Episode ids selected by `--split/--subset`, if given.
fn subset_ids(args: &SubsetArgs, run: &mut Run) -> Result<Option<HashSet<String>>> {
    match (&args.split, args.subset) {
        (Some(path), Some(role)) => {
            let split = load_split(path, run)?;
            Ok(Some(split.set(role).iter().cloned().collect()))
        }
        _ => Ok(None),
    }
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    let docs = corpus::load_corpus(&args.corpus)?;
    let tokens: usize = docs.iter().map(TranscriptDoc::len).sum();
    let annotated = docs.iter().filter(|d| !d.annotations.is_empty()).count();
    println!(
        "{}: ok ({} episodes, {tokens} tokens, {annotated} annotated)",
        args.corpus.display(),
        docs.len()
    );
    Ok(())
}

pub fn agreement(args: &AgreementArgs) -> Result<()> {
    let mut run = Run::start("agreement", args);
    let docs = load_corpus(&args.corpus, &mut run)?;
    let report = corpus::agreement_report(&docs, args.tolerance.into())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    eprint!("{report}");
    if let Some(out) = &args.output {
        write_json(out, &report)?;
        run.output(out);
    }
    run.finish()
}

pub fn gold(args: &GoldArgs) -> Result<()> {
    let mut run = Run::start("gold", args);
    let docs = load_corpus(&args.corpus, &mut run)?;
    let golds = corpus::resolve_corpus(&docs, args.tolerance.into())?;
    write_atomic(&args.output, |w| corpus::write_gold(w, &golds))?;
    let present = golds.iter().filter(|g| g.intro.is_some()).count();
    let evaluable = golds.iter().filter(|g| g.is_evaluable()).count();
    run.output(&args.output)
        .summary(json!({ "episodes": golds.len(), "with_intro": present, "evaluable": evaluable }));
    run.finish()
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let mut run = Run::start("split", args);
    run.seed(args.seed);
    let docs = load_corpus(&args.corpus, &mut run)?;
    let spec = SplitSpec {
        unseen_test_frac: args.fracs[0],
        unseen_val_frac: args.fracs[1],
        seen_test_frac: args.fracs[2],
        seen_val_frac: args.fracs[3],
        seed: args.seed,
    };
    let split = splitter::split_corpus(&docs, &spec)?;
    write_json(&args.output, &split)?;
    let sizes: serde_json::Map<_, _> = SplitRole::ALL
        .iter()
        .map(|&r| (r.name().to_owned(), json!(split.set(r).len())))
        .collect();
    run.output(&args.output).summary(sizes.into());
    run.finish()
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut run = Run::start("synth", args);
    let mut cfg = match &args.config {
        Some(path) => {
            run.input(path);
            let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))?;
            serde_json::from_str::<SynthConfig>(&text).with_context(|| format!("{}: invalid configuration", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    run.seed(cfg.seed);
    let docs = synth::generate(&cfg)?;
    write_atomic(&args.output, |w| corpus::write_corpus(w, &docs))?;
    run.output(&args.output);
    if let Some(path) = &args.embeddings_out {
        let table = synth::random_embeddings(cfg.vocabulary(), args.dim, cfg.seed);
        write_atomic(path, |w| scorer::write_embeddings(w, &table))?;
        run.output(path);
    }
    run.summary(json!({ "resolved_config": cfg, "episodes": docs.len() }));
    run.finish()
}

pub fn augment(args: &AugmentArgs) -> Result<()> {
    let mut run = Run::start("augment", args);
    run.seed(args.seed);
    let docs = load_corpus(&args.corpus, &mut run)?;
    let split = args.split.as_deref().map(|p| load_split(p, &mut run)).transpose()?;
    let golds = gold_map(corpus::resolve_corpus(&docs, args.tolerance.into())?);
    let sources: Vec<LabeledDoc> = docs
        .iter()
        .filter(|d| match &split {
            Some(s) => s.role(&d.episode_id) == Some(SplitRole::Train),
            None => true,
        })
        .filter_map(|d| {
            let gold = golds.get(&d.episode_id).filter(|g| g.is_evaluable())?;
            Some(LabeledDoc::from_range(d.clone(), gold.intro))
        })
        .collect();
    let cfg = AugmentConfig {
        copies_per_doc: args.copies,
        edit_prob: args.p,
        min_len: args.min_len,
        ..AugmentConfig::new(args.strategy.into(), args.seed)
    };
    let augmented = augment::augment_corpus(&sources, &cfg, split.as_ref())?;
    let copies = augmented.docs.len();
    let dropped: usize = augmented.dropped.iter().map(|(_, n)| n).sum();
    for (id, n) in &augmented.dropped {
        eprintln!("warning: {id}: dropped {n} degenerate copies");
    }
    let out: Vec<TranscriptDoc> = docs
        .into_iter()
        .chain(augmented.docs.into_iter().map(|d| d.into_annotated("augment")))
        .collect();
    write_atomic(&args.output, |w| corpus::write_corpus(w, &out))?;
    run.output(&args.output).summary(json!({
        "source_documents": sources.len(),
        "copies": copies,
        "dropped": dropped,
    }));
    run.finish()
}

/// Training documents: the split's train set plus augmented copies of it.
fn training_docs(docs: &[TranscriptDoc], split: &DatasetSplit, golds: &HashMap<String, GoldLabel>) -> Vec<LabeledDoc> {
    docs.iter()
        .filter(|d| split.role(augment::source_id(&d.episode_id)) == Some(SplitRole::Train))
        .filter_map(|d| {
            let gold = golds.get(&d.episode_id).filter(|g| g.is_evaluable())?;
            Some(LabeledDoc::from_range(d.clone(), gold.intro))
        })
        .collect()
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut run = Run::start("train", args);
    run.seed(args.seed);
    let docs = load_corpus(&args.corpus, &mut run)?;
    let split = load_split(&args.split, &mut run)?;
    run.input(&args.embeddings);
    let table = scorer::load_embeddings(&args.embeddings)?;
    let golds = match &args.gold {
        Some(path) => {
            run.input(path);
            corpus::load_gold(path)?
        }
        None => corpus::resolve_corpus(&docs, Tolerance::from(args.tolerance))?,
    };
    let train_docs = training_docs(&docs, &split, &gold_map(golds));
    if train_docs.is_empty() {
        bail!("{}: no training episode with an agreed gold label", args.corpus.display());
    }
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        l2: args.l2,
        seed: args.seed,
        class_weighting: !args.no_class_weighting,
    };
    let training = scorer::train_logistic(&train_docs, &table, &cfg)?;
    let file = ModelFile::new(&training.model, &cfg);
    write_atomic(&args.output, |w| {
        serde_json::to_writer(&mut *w, &file)?;
        w.write_all(b"\n")
    })?;
    let tokens: usize = train_docs.iter().map(|d| d.doc.len()).sum();
    run.output(&args.output).summary(json!({
        "documents": train_docs.len(),
        "tokens": tokens,
        "initial_loss": training.loss_history.first(),
        "final_loss": training.loss_history.last(),
    }));
    run.finish()
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let mut run = Run::start("score", args);
    let docs = load_corpus(&args.corpus, &mut run)?;
    run.input(&args.model).input(&args.embeddings);
    let model = ModelFile::load(&args.model)?.model();
    let table = scorer::load_embeddings(&args.embeddings)?;
    let chunk = ChunkConfig::new(args.max_len, args.overlap)?;
    let keep = subset_ids(&args.subset, &mut run)?;
    let seqs = docs
        .iter()
        .filter(|d| keep.as_ref().is_none_or(|k| k.contains(&d.episode_id)))
        .map(|d| scorer::score_document(d, &model, &table, &chunk))
        .collect::<podintro::Result<Vec<_>>>()?;
    write_atomic(&args.output, |w| scorer::write_scores(w, &seqs))?;
    run.output(&args.output).summary(json!({ "episodes": seqs.len() }));
    run.finish()
}

pub fn segment(args: &SegmentArgs) -> Result<()> {
    let mut run = Run::start("segment", args);
    run.input(&args.scores);
    let seqs = match &args.corpus {
        Some(path) => {
            let docs = load_corpus(path, &mut run)?;
            scorer::import_scores(&args.scores, &docs)?
        }
        None => scorer::load_scores(&args.scores)?,
    };
    let cfg = BoundaryConfig {
        k: args.k,
        enforce_order: !args.no_enforce_order,
        min_peak: args.min_peak,
    };
    cfg.validate()?;
    if let Some(short) = seqs.iter().filter(|s| s.len() < 2 * cfg.k).min_by_key(|s| s.len()) {
        bail!(
            "{}: episode `{}` has {} tokens, fewer than 2k = {}; lower k",
            args.scores.display(),
            short.episode_id,
            short.len(),
            2 * cfg.k
        );
    }
    let preds = seqs
        .iter()
        .map(|s| {
            boundary::detect(s, &cfg).map_err(|e| match e {
                Error::SequenceTooShort { .. } => anyhow::anyhow!("episode `{}`: {e}", s.episode_id),
                other => other.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&args.output, |w| boundary::write_predictions(w, &preds))?;
    let abstained = preds.iter().filter(|p| p.intro.is_none()).count();
    run.output(&args.output)
        .summary(json!({ "episodes": preds.len(), "abstained": abstained }));
    run.finish()
}

fn sibling(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    name.into()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut run = Run::start("evaluate", args);
    run.input(&args.gold);
    let golds = corpus::load_gold(&args.gold)?;
    let keep = subset_ids(&args.subset, &mut run)?;
    let mut reports = Vec::new();
    for path in std::iter::once(&args.predictions).chain(&args.runs) {
        run.input(path);
        let preds: Vec<_> = boundary::load_predictions(path)?
            .into_iter()
            .filter(|p| keep.as_ref().is_none_or(|k| k.contains(&p.episode_id)))
            .collect();
        if preds.is_empty() {
            bail!("{}: no predictions to evaluate", path.display());
        }
        let report = eval::evaluate_run(&preds, &golds, &args.offsets)
            .with_context(|| format!("evaluating {}", path.display()))?;
        reports.push(report);
    }
    let mut report = eval::aggregate_runs(&reports)?;
    report.scorer = Some(args.scorer.clone());
    report.k = args.k;

    let table = eval::render_table(&[(&args.scorer, &report)]);
    print!("{table}");
    write_json(&args.output, &report)?;
    let table_path = sibling(&args.output, ".txt");
    write_atomic(&table_path, |w| w.write_all(table.as_bytes()))?;

    let overlap_path = sibling(&args.output, ".overlap.csv");
    let mut overlap_csv = csv::Writer::from_writer(Vec::new());
    for o in &report.overlaps {
        overlap_csv.serialize(o)?;
    }
    let bytes = overlap_csv.into_inner().context("flushing overlap table")?;
    write_atomic(&overlap_path, |w| w.write_all(&bytes))?;

    let accuracy_path = sibling(&args.output, ".accuracy.csv");
    let mut acc_csv = csv::Writer::from_writer(Vec::new());
    acc_csv.write_record(["offset", "start_mean", "start_ci95", "end_mean", "end_ci95"])?;
    let fmt_ci = |c: Option<f64>| c.map(|v| v.to_string()).unwrap_or_default();
    for (i, offset) in report.offsets.iter().enumerate() {
        let (s, e) = (report.start_accuracy[i], report.end_accuracy[i]);
        acc_csv.write_record([
            offset.to_string(),
            s.mean.to_string(),
            fmt_ci(s.ci95),
            e.mean.to_string(),
            fmt_ci(e.ci95),
        ])?;
    }
    let bytes = acc_csv.into_inner().context("flushing accuracy table")?;
    write_atomic(&accuracy_path, |w| w.write_all(&bytes))?;

    run.output(&args.output)
        .output(&table_path)
        .output(&overlap_path)
        .output(&accuracy_path)
        .summary(json!({
            "runs": report.runs,
            "episodes": report.episodes,
            "mean_overlap": report.mean_overlap.mean,
        }));
    run.finish()
}
