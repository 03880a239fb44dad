use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use extentlab_core::annotation::{import_records, AnnotationService};
use extentlab_core::classifier::{
    fit, load_model, predict_full, sample_label, save_model, AnyClassifier, Classifier, LabelSet, LinearBow,
    TrainConfig,
};
use extentlab_core::corpus::{
    corpus_stats, load_corpus, samples_from_documents, save_corpus, split_dataset, RelationSample, Split,
    SplitAssignment,
};
use extentlab_core::extents::{extent_batch, load_extents, save_extents, ExtentConfig, ExtentMode, SemanticExtent};
use extentlab_core::io::{read_jsonl, write_atomic, write_jsonl};
use extentlab_core::metrics::{
    adversarial_eval, agreement_report, class_histograms, confidence_breakdown, f1_scores, load_adversarial,
    SentencePrediction,
};
use extentlab_core::report::{emit_report, write_histogram_csv, ReportEnvelope, ReportFormat, ReportMetadata, Tabular};
use serde::Serialize;

use crate::error::CliError;
use crate::{Cli, Command, Format, Mode, Part, Selection};

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    root: Option<PathBuf>,
    seed: u64,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Resolves an input path and fails with an input error when it is absent.
    fn input(&self, p: &Path) -> Result<PathBuf> {
        let p = self.path(p);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::input(
                "missing_input",
                format!("{} does not exist", p.display()),
            ))
        }
    }

    fn meta(&self, command: &str) -> ReportMetadata {
        ReportMetadata::now(command, Some(self.seed))
    }

    fn emit<T: Serialize + Tabular>(&self, command: &str, out: &Path, report: &T, format: Format) -> Result<()> {
        let format = match format {
            Format::Structured => ReportFormat::Structured,
            Format::Tabular => ReportFormat::Tabular,
        };
        emit_report(&self.path(out), report, format, &self.meta(command))?;
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        root: cli.data_dir,
        seed: cli.seed,
    };
    match cli.command {
        Command::Ingest { input, out } => ingest(&ctx, &input, &out),
        Command::Split {
            corpus,
            base,
            ratio,
            out,
        } => split(&ctx, &corpus, base.as_deref(), &ratio, &out),
        Command::Stats { corpus, out, format } => {
            let samples = samples(&ctx, &corpus)?;
            ctx.emit("stats", &out, &corpus_stats(&samples), format)
        }
        Command::Train {
            corpus,
            split,
            config,
            out,
        } => train(&ctx, &corpus, &split, config.as_deref(), &out),
        Command::Eval {
            model,
            select,
            out,
            predictions,
            format,
        } => eval(&ctx, &model, &select, &out, predictions.as_deref(), format),
        Command::Extents {
            model,
            select,
            mode,
            theta,
            beam_width,
            out,
        } => extents(&ctx, &model, &select, mode, theta, beam_width, &out),
        Command::Agree { a, b, out, format } => {
            let a = any_extents(&ctx.input(&a)?)?;
            let b = any_extents(&ctx.input(&b)?)?;
            ctx.emit("agree", &out, &agreement_report(&a, &b)?, format)
        }
        Command::Breakdown {
            extents,
            predictions,
            out,
            format,
        } => {
            let extents = load_extents(&ctx.input(&extents)?)?;
            let predictions: Vec<SentencePrediction> = read_jsonl(&ctx.input(&predictions)?)?;
            let gold: HashMap<String, String> = predictions
                .iter()
                .filter_map(|p| p.gold.clone().map(|g| (p.sample_id.clone(), g)))
                .collect();
            ctx.emit(
                "breakdown",
                &out,
                &confidence_breakdown(&extents, &predictions, &gold)?,
                format,
            )
        }
        Command::Histogram {
            extents,
            corpus,
            out,
            csv,
        } => {
            let extents = any_extents(&ctx.input(&extents)?)?;
            let samples = samples(&ctx, &corpus)?;
            let h = class_histograms(&extents, &samples);
            ctx.emit("histogram", &out, &h, Format::Structured)?;
            if let Some(csv) = csv {
                write_histogram_csv(&ctx.path(&csv), &h)?;
            }
            Ok(())
        }
        Command::Adversarial {
            model,
            groups,
            out,
            format,
        } => {
            let model = load_model(&ctx.input(&model)?)?;
            let (groups, rejected) = load_adversarial(&ctx.input(&groups)?)?;
            let mut report = adversarial_eval(&model, &groups)?;
            report.rejected.extend(rejected);
            ctx.emit("adversarial", &out, &report, format)
        }
        Command::Serve {
            corpus,
            model,
            store,
            listen,
        } => {
            let samples = samples(&ctx, &corpus)?;
            let model: Arc<AnyClassifier> = Arc::new(load_model(&ctx.input(&model)?)?);
            let service = AnnotationService::open(samples, model, &ctx.path(&store))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::compute("runtime", e.to_string()))?;
            rt.block_on(extentlab_server::serve(Arc::new(service), listen))
                .map_err(|e| CliError::input("listen", format!("{listen}: {e}")))
        }
    }
}

fn samples(ctx: &Ctx, corpus: &Path) -> Result<Vec<RelationSample>> {
    let (docs, _) = load_corpus(&ctx.input(corpus)?)?;
    Ok(samples_from_documents(&docs)?.samples)
}

fn select(ctx: &Ctx, sel: &Selection) -> Result<Vec<RelationSample>> {
    let all = samples(ctx, &sel.corpus)?;
    let (Some(split), false) = (&sel.split, sel.on == Part::All) else {
        return Ok(all);
    };
    let assignment = SplitAssignment::load(&ctx.input(split)?)?;
    let want = match sel.on {
        Part::Train => Split::Train,
        Part::Dev => Split::Dev,
        _ => Split::Test,
    };
    Ok(all
        .into_iter()
        .filter(|s| assignment.get(&s.sample_id) == Some(want))
        .collect())
}

/// Machine extents, or exported annotation records read as human extents.
fn any_extents(path: &Path) -> Result<Vec<SemanticExtent>> {
    match load_extents(path) {
        Ok(e) => Ok(e),
        Err(first) => match import_records(path) {
            Ok(records) => Ok(records.iter().map(|r| r.to_extent()).collect()),
            Err(_) => Err(first.into()),
        },
    }
}

fn ingest(ctx: &Ctx, input: &Path, out: &Path) -> Result<()> {
    let (docs, report) = load_corpus(&ctx.input(input)?)?;
    let set = samples_from_documents(&docs)?;
    log::info!(
        "{} documents, {} samples, {} cross-sentence relations skipped, {} overlapping samples dropped, {} unknown fields",
        report.documents,
        set.samples.len(),
        set.skipped_cross_sentence,
        set.rejected_overlap,
        report.unknown_fields
    );
    save_corpus(&ctx.path(out), &docs)?;
    Ok(())
}

fn split(ctx: &Ctx, corpus: &Path, base: Option<&Path>, ratio: &[f64], out: &Path) -> Result<()> {
    let ratio: [f64; 3] = ratio
        .try_into()
        .map_err(|_| CliError::usage("--ratio takes three comma-separated values"))?;
    let ids: Vec<String> = samples(ctx, corpus)?.into_iter().map(|s| s.sample_id).collect();
    let base = base
        .map(|b| ctx.input(b).and_then(|p| Ok(SplitAssignment::load(&p)?)))
        .transpose()?;
    split_dataset(&ids, base.as_ref(), ratio, ctx.seed)?.save(&ctx.path(out))?;
    Ok(())
}

fn train(ctx: &Ctx, corpus: &Path, split: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let all = samples(ctx, corpus)?;
    let assignment = SplitAssignment::load(&ctx.input(split)?)?;
    let mut cfg = match config {
        Some(c) => {
            let p = ctx.input(c)?;
            let bytes = std::fs::read(&p).map_err(|e| CliError::input("io", format!("{}: {e}", p.display())))?;
            serde_json::from_slice::<TrainConfig>(&bytes)
                .map_err(|e| CliError::input("config", format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = ctx.seed;
    let part = |want: Split| -> Vec<RelationSample> {
        all.iter()
            .filter(|s| assignment.get(&s.sample_id) == Some(want))
            .cloned()
            .collect()
    };
    let (train, dev) = (part(Split::Train), part(Split::Dev));
    let mut model = LinearBow::new(LabelSet::from_samples(&all)?);
    let report = fit(&mut model, &train, &dev, &cfg)?;
    let dir = ctx.path(out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::input("io", format!("{}: {e}", dir.display())))?;
    save_model(&dir, &AnyClassifier::Linear(model))?;
    let envelope = ReportEnvelope {
        metadata: ctx.meta("train"),
        report,
    };
    let mut bytes = serde_json::to_vec_pretty(&envelope).map_err(|e| CliError::compute("serialize", e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(&dir.join("training_report.json"), &bytes)?;
    Ok(())
}

fn eval(
    ctx: &Ctx,
    model: &Path,
    sel: &Selection,
    out: &Path,
    predictions: Option<&Path>,
    format: Format,
) -> Result<()> {
    let model = load_model(&ctx.input(model)?)?;
    let samples = select(ctx, sel)?;
    let preds: Vec<SentencePrediction> = samples
        .iter()
        .map(|s| {
            let p = predict_full(&model, s)?;
            Ok(SentencePrediction {
                sample_id: s.sample_id.clone(),
                predicted: p.predicted,
                confidence: p.confidence,
                n_tokens: s.len(),
                gold: Some(sample_label(s).to_string()),
            })
        })
        .collect::<Result<_>>()?;
    let gold: Vec<&str> = samples.iter().map(sample_label).collect();
    let pred: Vec<&str> = preds.iter().map(|p| p.predicted.as_str()).collect();
    let report = f1_scores(&gold, &pred, Some(model.label_set()))?;
    if let Some(p) = predictions {
        write_jsonl(&ctx.path(p), &preds)?;
    }
    ctx.emit("eval", out, &report, format)
}

fn extents(
    ctx: &Ctx,
    model: &Path,
    sel: &Selection,
    mode: Mode,
    theta: f64,
    beam_width: usize,
    out: &Path,
) -> Result<()> {
    let model = load_model(&ctx.input(model)?)?;
    let samples = select(ctx, sel)?;
    let cfg = ExtentConfig {
        theta,
        beam_width,
        ..ExtentConfig::default()
    };
    cfg.validate()?;
    let mode = match mode {
        Mode::Expanding => ExtentMode::Expanding,
        Mode::Reductive => ExtentMode::Reductive,
    };
    let mut ok = Vec::with_capacity(samples.len());
    let mut failed = Vec::new();
    for r in extent_batch(&model, &samples, &HashMap::new(), &cfg, mode) {
        match r {
            Ok(e) => ok.push(e),
            Err(f) => {
                log::error!("{}: {}", f.sample_id, f.message);
                failed.push(f.sample_id);
            }
        }
    }
    save_extents(&ctx.path(out), &ok)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::compute(
            "extent_failures",
            format!("{} of {} samples failed: {:?}", failed.len(), samples.len(), failed),
        ))
    }
}
