use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use stance_core::booklet::{
    analyze, booklet_stats, language_view, load_booklet, BookletStatement, IssueReport,
};
use stance_core::corpus::{
    corpus_stats, filter_language, load_corpus, load_corpus_dir, partition, CorpusAdapter,
    CorpusFormat, PartitionStrategy, PartitionedDataset, StanceExample,
};
use stance_core::evaluation::{evaluate_model, macro_f1, render_table};
use stance_core::linear::{train_linear, train_subword, LinearKind};
use stance_core::plot::{box_plot_svg, stacked_bar_svg};
use stance_core::report::QUANTILE_METHOD;
use stance_core::{Language, LinearModel, StanceClassifier, StanceLabel, SubwordModel};
use stance_encoder::{fine_tune, fine_tune_checkpoint, BertConfig, Checkpoint, LocalWeights};

use crate::config::{EncoderInit, ModelKind, PartitionChoice, PipelineConfig};
use crate::error::CliError;
use crate::models::load_model;
use crate::output::{self, now_unix, Provenance, StoreLock};

/// Resolved configuration plus the per-invocation flags that stay out of the hash.
pub struct Context {
    pub cfg: PipelineConfig,
    pub prov: Provenance,
    pub model_path: Option<PathBuf>,
    pub output_explicit: bool,
}

impl Context {
    pub fn new(cfg: PipelineConfig, model_path: Option<PathBuf>, output_explicit: bool) -> Self {
        let prov = Provenance::new(cfg.hash(), cfg.seed);
        Context {
            cfg,
            prov,
            model_path,
            output_explicit,
        }
    }

    fn model_path(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.cfg.default_model_path(self.cfg.model.kind))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.output_dir.join(name)
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

const MAX_REPORTED_DIAGNOSTICS: usize = 20;

pub fn load_examples(cfg: &PipelineConfig) -> Result<Vec<StanceExample>, CliError> {
    let path = cfg.paths.corpus.as_deref().ok_or_else(|| {
        CliError::Usage("no corpus given: pass --corpus or set paths.corpus".into())
    })?;
    let adapter = match &cfg.corpus.adapter {
        Some(p) => CorpusAdapter::from_path(p)?,
        None if path.is_dir() => CorpusAdapter::xstance(),
        None => CorpusAdapter::default(),
    };
    let loaded = if path.is_dir() {
        load_corpus_dir(path, &adapter)?
    } else {
        let format = cfg
            .corpus
            .format
            .unwrap_or_else(|| CorpusFormat::from_path(path));
        load_corpus(path, format, &adapter)?
    };
    for d in loaded.diagnostics.iter().take(MAX_REPORTED_DIAGNOSTICS) {
        log::warn!("skipped record: {d}");
    }
    if loaded.diagnostics.len() > MAX_REPORTED_DIAGNOSTICS {
        log::warn!(
            "{} more records skipped",
            loaded.diagnostics.len() - MAX_REPORTED_DIAGNOSTICS
        );
    }
    if loaded.examples.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no valid records",
            path.display()
        )));
    }
    Ok(loaded.examples)
}

pub fn partition_examples(
    cfg: &PipelineConfig,
    examples: &[StanceExample],
) -> Result<PartitionedDataset, CliError> {
    let strategy = match cfg.corpus.partition {
        PartitionChoice::Provided => PartitionStrategy::UseProvidedTags,
        PartitionChoice::Derive => PartitionStrategy::Derive,
        PartitionChoice::Auto if examples.iter().all(|e| e.split.is_some()) => {
            PartitionStrategy::UseProvidedTags
        }
        PartitionChoice::Auto => PartitionStrategy::Derive,
    };
    log::info!("partitioning {} examples ({strategy:?})", examples.len());
    Ok(partition(examples, strategy, &cfg.corpus.derive)?)
}

fn restrict(d: PartitionedDataset, language: Option<Language>) -> PartitionedDataset {
    let Some(l) = language else { return d };
    PartitionedDataset {
        train: filter_language(&d.train, l),
        validation: filter_language(&d.validation, l),
        test_intra_target: filter_language(&d.test_intra_target, l),
        test_cross_question: filter_language(&d.test_cross_question, l),
        test_cross_topic: filter_language(&d.test_cross_topic, l),
    }
}

fn sizes(d: &PartitionedDataset) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("train", d.train.len()),
        ("validation", d.validation.len()),
        ("test_intra_target", d.test_intra_target.len()),
        ("test_cross_question", d.test_cross_question.len()),
        ("test_cross_topic", d.test_cross_topic.len()),
    ])
}

fn score(
    model: &dyn StanceClassifier,
    examples: &[StanceExample],
) -> Result<Option<f64>, CliError> {
    if examples.is_empty() {
        return Ok(None);
    }
    let pairs: Vec<(&str, &str)> = examples
        .iter()
        .map(|e| (e.question.as_str(), e.comment.as_str()))
        .collect();
    let predicted: Vec<StanceLabel> = model
        .predict_batch(&pairs)?
        .iter()
        .map(|p| p.predicted_label)
        .collect();
    let gold: Vec<StanceLabel> = examples.iter().map(|e| e.label).collect();
    Ok(Some(macro_f1::<f64>(&predicted, &gold)?))
}

/// Directory whose lock guards writes to `model_path`.
fn lock_dir(ctx: &Context, model_path: &Path) -> PathBuf {
    if ctx.model_path.is_none() {
        return ctx.cfg.paths.model_store.clone();
    }
    match model_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let examples = load_examples(cfg)?;
    let data = partition_examples(cfg, &examples)?;
    let kind = cfg.model.kind;
    let model_path = ctx.model_path();
    log::info!(
        "training {} on {} examples ({} validation)",
        kind.as_str(),
        data.train.len(),
        data.validation.len()
    );
    let started = std::time::Instant::now();

    let (model, training): (Box<dyn StanceClassifier>, serde_json::Value) = match kind {
        ModelKind::Ridge | ModelKind::Svm => {
            let lk = if kind == ModelKind::Ridge {
                LinearKind::Ridge
            } else {
                LinearKind::Svm
            };
            let m: LinearModel =
                train_linear(&data.train, &data.validation, lk, &cfg.model.linear)?;
            let _lock = StoreLock::acquire(&lock_dir(ctx, &model_path))?;
            m.save(&model_path)?;
            let log = json!({ "solver": m.solver, "calibration": m.calibration });
            (Box::new(m), log)
        }
        ModelKind::Subword => {
            let m: SubwordModel = train_subword(&data.train, &data.validation, &cfg.model.subword)?;
            let _lock = StoreLock::acquire(&lock_dir(ctx, &model_path))?;
            m.save(&model_path)?;
            let log = json!({ "epochs": m.training_log });
            (Box::new(m), log)
        }
        ModelKind::Encoder => {
            let enc = &cfg.model.encoder;
            let m = match cfg.model.encoder_init {
                EncoderInit::Pretrained => fine_tune(
                    &data.train,
                    &data.validation,
                    enc,
                    &LocalWeights::from_env(),
                )?,
                EncoderInit::ScratchTiny => {
                    let texts = data
                        .train
                        .iter()
                        .flat_map(|e| [e.question.as_str(), e.comment.as_str()]);
                    let ckpt = Checkpoint::from_scratch(
                        texts,
                        enc.lowercase.unwrap_or(true),
                        BertConfig::tiny,
                    )?;
                    fine_tune_checkpoint(ckpt, &data.train, &data.validation, enc)?
                }
            };
            let _lock = StoreLock::acquire(&lock_dir(ctx, &model_path))?;
            m.save(&model_path)?;
            let log = json!({ "epochs": m.training_log() });
            (Box::new(m), log)
        }
    };
    let validation_macro_f1 = score(model.as_ref(), &data.validation)?;

    let metrics = json!({
        "metadata": {
            "model_id": model.model_id(),
            "config_hash": ctx.prov.config_hash,
            "seed": ctx.prov.seed,
            "code_version": ctx.prov.code_version,
        },
        "kind": kind.as_str(),
        "partition_sizes": sizes(&data),
        "validation_macro_f1": validation_macro_f1,
        "training": training,
    });
    output::write_json(&ctx.out("train_metrics.json"), &metrics)?;
    eprintln!(
        "trained {} in {:.1}s; model written to {}",
        kind.as_str(),
        started.elapsed().as_secs_f64(),
        model_path.display()
    );
    if let Some(f1) = validation_macro_f1 {
        emit(&format!("validation macro-F1: {f1:.2}\n"));
    }
    Ok(())
}

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let model_path = ctx.model_path();
    // fail on a missing model before the corpus work
    if !model_path.exists() {
        return Err(CliError::Model(format!(
            "model not found: {}",
            model_path.display()
        )));
    }
    let examples = load_examples(cfg)?;
    let data = restrict(partition_examples(cfg, &examples)?, cfg.language);
    let model = load_model(&model_path)?;
    let mut report = evaluate_model(model.as_ref(), &data)?;
    report.metadata.config_hash = Some(ctx.prov.config_hash.clone());
    report.metadata.seed = Some(ctx.prov.seed);
    report.metadata.code_version = Some(ctx.prov.code_version.clone());

    let table = render_table(std::slice::from_ref(&report), cfg.evaluation.mean);
    output::write(&ctx.out("eval_report.csv"), &ctx.prov.csv(&report.to_csv()))?;
    output::write(&ctx.out("eval_table.txt"), &ctx.prov.text(&table))?;
    report.metadata.created_unix = Some(now_unix());
    output::write(
        &ctx.out("eval_report.json"),
        &format!("{}\n", report.to_json()),
    )?;
    emit(&format!("{table}\n"));
    Ok(())
}

pub fn predict(ctx: &Context, question: &str, comment: &str) -> Result<(), CliError> {
    let model = load_model(&ctx.model_path())?;
    let p = model.predict(question, comment)?;
    emit(&format!(
        "{}\n",
        serde_json::to_string(&p).expect("prediction serializes")
    ));
    if ctx.output_explicit {
        output::write_json(
            &ctx.out("prediction.json"),
            &json!({
                "metadata": { "model_id": model.model_id(), "provenance": ctx.prov },
                "question": question,
                "comment": comment,
                "prediction": p,
            }),
        )?;
    }
    Ok(())
}

fn load_statements(ctx: &Context) -> Result<Vec<BookletStatement>, CliError> {
    let path = ctx.cfg.paths.booklet.as_deref().ok_or_else(|| {
        CliError::Usage("no booklet given: pass --booklet or set paths.booklet".into())
    })?;
    let mut statements = load_booklet(path)?;
    if let Some(l) = ctx.cfg.language {
        statements.retain(|s| s.language == l);
        if statements.is_empty() {
            return Err(CliError::Data(format!(
                "{}: no {l} statements",
                path.display()
            )));
        }
    }
    Ok(statements)
}

fn summary_table(report: &IssueReport) -> String {
    let mut out = format!(
        "{:<10} {:>4} {:>6} {:>7} {:>7} {:>6} {:>8} {:>8}\n",
        "Issue", "Lang", "n", "sigma", "median", "FOR%", "NEUTRAL%", "AGAINST%"
    );
    for g in &report.groups {
        let pct = |l| g.label_percent.get(&l).copied().unwrap_or(0.0);
        use stance_core::booklet::ThreeWayLabel as T;
        let _ = writeln!(
            out,
            "{:<10} {:>4} {:>6} {:>7.4} {:>7.4} {:>6.1} {:>8.1} {:>8.1}",
            g.issue.display_name(),
            g.language.map_or("all", |l| l.code()),
            g.n,
            g.sigma,
            g.box_stats.median,
            pct(T::For),
            pct(T::Neutral),
            pct(T::Against)
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn write_report(
    ctx: &Context,
    report: &IssueReport,
    model_id: &str,
    tag: &str,
    created: u64,
) -> Result<(), CliError> {
    let meta = json!({
        "model_id": model_id,
        "config_hash": ctx.prov.config_hash,
        "seed": ctx.prov.seed,
        "code_version": ctx.prov.code_version,
        "quantile_method": QUANTILE_METHOD,
        "whisker_rule": "1.5 IQR; five-number summary and fences stored per group",
        "created_unix": created,
    });
    output::write(
        &ctx.out(&format!("analysis_{tag}.csv")),
        &ctx.prov.csv(&report.to_csv()),
    )?;
    output::write_json(
        &ctx.out(&format!("analysis_{tag}.json")),
        &json!({ "metadata": meta, "report": report }),
    )?;
    Ok(())
}

fn write_plots(ctx: &Context, report: &IssueReport, tag: &str, title: &str) {
    let plots = [
        (
            format!("box_{tag}.svg"),
            box_plot_svg(report, &format!("Probability of FAVOR: {title}")),
        ),
        (
            format!("labels_{tag}.svg"),
            stacked_bar_svg(report, &format!("Predicted labels: {title}")),
        ),
    ];
    for (name, svg) in plots {
        let res = svg.map_err(|e| e.to_string()).and_then(|s| {
            output::write(&ctx.out(&name), &ctx.prov.svg(&s)).map_err(|e| e.to_string())
        });
        if let Err(e) = res {
            log::warn!("{name} not written: {e}");
        }
    }
}

pub fn analyze_booklet(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let statements = load_statements(ctx)?;
    let model = load_model(&ctx.model_path())?;
    let report = analyze(
        &statements,
        model.as_ref(),
        cfg.analysis.sigma_scope,
        cfg.analysis.sigma_mode,
    )?;
    let model_id = model.model_id();
    let created = now_unix();

    let mut views = vec![(
        "all".to_string(),
        "all languages".to_string(),
        report.clone(),
    )];
    for l in Language::ALL {
        if let Some(v) = language_view(&report, l) {
            views.push((l.code().to_ascii_lowercase(), l.code().to_string(), v));
        }
    }
    // numbers first, so a plotting failure cannot suppress them
    for (tag, _, r) in &views {
        write_report(ctx, r, &model_id, tag, created)?;
    }
    for (tag, title, r) in &views {
        write_plots(ctx, r, tag, title);
    }
    emit(&summary_table(&report));
    eprintln!("reports written to {}", cfg.paths.output_dir.display());
    Ok(())
}

pub fn stats(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    if cfg.paths.corpus.is_none() && cfg.paths.booklet.is_none() {
        return Err(CliError::Usage(
            "stats needs --corpus and/or --booklet".into(),
        ));
    }
    let mut out = serde_json::Map::new();
    if cfg.paths.corpus.is_some() {
        let mut examples = load_examples(cfg)?;
        if let Some(l) = cfg.language {
            examples = filter_language(&examples, l);
        }
        let s = corpus_stats(&examples);
        emit(&format!("{s}\n"));
        out.insert(
            "corpus".into(),
            serde_json::to_value(&s).expect("stats serialize"),
        );
    }
    if cfg.paths.booklet.is_some() {
        let s = booklet_stats(&load_statements(ctx)?)?;
        emit(&format!("{s}\n"));
        out.insert(
            "booklet".into(),
            serde_json::to_value(&s).expect("stats serialize"),
        );
    }
    if ctx.output_explicit {
        out.insert(
            "metadata".into(),
            serde_json::to_value(&ctx.prov).expect("serializes"),
        );
        output::write_json(&ctx.out("stats.json"), &out)?;
    }
    Ok(())
}
