use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cohgraph::census::{mine_subgraphs, SubgraphSet, SubgraphSetRecord};
use cohgraph::corpus::{
    load_corpus, load_corpus_with_labels, load_embeddings, load_features, make_folds,
    make_stratified_folds, write_corpus, Corpus, LabelMap,
};
use cohgraph::ndjson::{self, HEADER_KEY};
use cohgraph::pipeline::{
    correlation_analysis, cross_validate, diagnostics, prepare_documents, CorrelationConfig,
    DiagnosticsConfig, DocumentSubgraphs, FoldResult, PredictionRecord,
};
use cohgraph::sentgraph::{build_sentence_graph, SentenceGraphRecord};
use cohgraph::synthetic::{structural_corpus, StructuralCorpusSpec};

use crate::tables;
use crate::{
    AnalyzeArgs, CensusArgs, CensusOpts, GraphOpts, GraphsArgs, InputOpts, RunConfig, SynthArgs,
    TrainEvalArgs,
};

pub const GRAPHS_FILE: &str = "graphs.jsonl";
pub const SUBGRAPHS_FILE: &str = "subgraphs.jsonl";
pub const REPORT_FILE: &str = "cv_report.jsonl";

struct Output {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Output {
    fn create(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Output {
            path,
            out: BufWriter::new(file),
        })
    }

    fn header<T: Serialize>(&mut self, cfg: &T) -> Result<()> {
        ndjson::write_header(&mut self.out, cfg)?;
        Ok(())
    }

    fn record<T: Serialize + ?Sized>(&mut self, rec: &T) -> Result<()> {
        ndjson::write_record(&mut self.out, rec)?;
        Ok(())
    }

    /// `# {"run_config": ...}` as the first line of a non-JSON artifact.
    fn comment_header<T: Serialize>(&mut self, cfg: &T) -> Result<()> {
        let header = serde_json::json!({ HEADER_KEY: cfg });
        writeln!(self.out, "# {header}")?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.out
            .flush()
            .with_context(|| format!("cannot write {}", self.path.display()))?;
        Ok(self.path)
    }
}

fn load_labeled_corpus(path: &Path, labels: Option<&[String]>) -> Result<Corpus> {
    let corpus = match labels {
        Some(names) => load_corpus_with_labels(path, &LabelMap::new(names.iter().cloned())?)?,
        None => load_corpus(path)?,
    };
    ensure!(
        !corpus.documents.is_empty(),
        "{} contains no documents",
        path.display()
    );
    Ok(corpus)
}

/// Subgraph sets for every corpus document, from a cache or computed from embeddings.
fn document_subgraphs(
    corpus: &Corpus,
    input: &InputOpts,
    graph: &GraphOpts,
    census: &CensusOpts,
) -> Result<Vec<DocumentSubgraphs>> {
    let cfg = census.config()?;
    if let Some(path) = &input.subgraphs {
        let mut by_id: HashMap<String, SubgraphSet> = HashMap::new();
        for (line, rec) in ndjson::read_records::<SubgraphSetRecord>(path)? {
            if rec.k != cfg.k() {
                bail!(
                    "{}:{line}: cached subgraphs have k={}, run uses k={} (pass -k {})",
                    path.display(),
                    rec.k,
                    cfg.k(),
                    rec.k
                );
            }
            let set = rec
                .to_set()
                .with_context(|| format!("{}:{line}", path.display()))?;
            if by_id.insert(rec.id.clone(), set).is_some() {
                bail!("{}:{line}: duplicate id {:?}", path.display(), rec.id);
            }
        }
        corpus
            .documents
            .iter()
            .map(|d| {
                let subgraphs = by_id
                    .remove(&d.id)
                    .with_context(|| format!("no cached subgraphs for document {:?}", d.id))?;
                Ok(DocumentSubgraphs {
                    id: d.id.clone(),
                    label: d.label,
                    subgraphs,
                })
            })
            .collect()
    } else {
        let path = input
            .embeddings
            .as_ref()
            .context("either --subgraphs or --embeddings is required")?;
        let table = load_embeddings(path)?;
        Ok(prepare_documents(
            &corpus.documents,
            &table,
            graph.delta,
            &cfg,
        )?)
    }
}

fn labels_of(docs: &[DocumentSubgraphs]) -> Result<Vec<usize>> {
    docs.iter()
        .map(|d| {
            d.label
                .with_context(|| format!("document {:?} has no label", d.id))
        })
        .collect()
}

pub fn graphs<T: Serialize>(args: &GraphsArgs, cfg: &RunConfig<T>, out_dir: &Path) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let table = load_embeddings(&args.embeddings)?;
    let records: Vec<SentenceGraphRecord> = corpus
        .documents
        .par_iter()
        .map(|d| {
            let g = build_sentence_graph(d, &table, args.graph.delta)
                .with_context(|| format!("document {:?}", d.id))?;
            Ok(SentenceGraphRecord::new(d.id.clone(), &g))
        })
        .collect::<Result<_>>()?;

    let mut out = Output::create(out_dir, GRAPHS_FILE)?;
    out.header(cfg)?;
    for r in &records {
        out.record(r)?;
    }
    let path = out.finish()?;
    println!("{} sentence graphs -> {}", records.len(), path.display());
    Ok(())
}

pub fn census<T: Serialize>(args: &CensusArgs, cfg: &RunConfig<T>, out_dir: &Path) -> Result<()> {
    let census = args.census.config()?;
    let input = args
        .graphs
        .clone()
        .unwrap_or_else(|| out_dir.join(GRAPHS_FILE));
    let records: Vec<(usize, SentenceGraphRecord)> = ndjson::read_records(&input)?;
    let sets: Vec<SubgraphSetRecord> = records
        .par_iter()
        .map(|(line, r)| {
            let g = r
                .to_graph()
                .with_context(|| format!("{}:{line}", input.display()))?;
            Ok(SubgraphSetRecord::new(
                r.id.clone(),
                &mine_subgraphs(&g, &census),
            ))
        })
        .collect::<Result<_>>()?;

    let mut out = Output::create(out_dir, SUBGRAPHS_FILE)?;
    out.header(cfg)?;
    for s in &sets {
        out.record(s)?;
    }
    let path = out.finish()?;
    println!("{} subgraph sets -> {}", sets.len(), path.display());
    Ok(())
}

/// One fold line of `cv_report.jsonl` (training histories go to CSV files).
#[derive(Debug, Serialize, Deserialize)]
struct FoldLine {
    fold: usize,
    accuracy: f64,
    macro_f1: f64,
    confusion: Vec<Vec<usize>>,
    predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    model: String,
    classes: Vec<String>,
    folds: usize,
    mean_accuracy: f64,
    std_accuracy: f64,
    mean_macro_f1: f64,
    std_macro_f1: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryLine {
    summary: Summary,
}

pub fn train_eval<T: Serialize>(
    args: &TrainEvalArgs,
    cfg: &RunConfig<T>,
    out_dir: &Path,
) -> Result<()> {
    let pipeline = args.pipeline()?;
    let corpus = load_labeled_corpus(&args.input.corpus, args.input.labels.as_deref())?;
    let features = load_features(&args.features)?;
    features.check_covers(corpus.documents.iter().map(|d| d.id.as_str()))?;
    let docs = document_subgraphs(&corpus, &args.input, &args.graph, &args.census)?;
    let labels = labels_of(&docs)?;
    let ids = corpus.ids();
    let folds = usize::try_from(args.folds)?;
    let plan = if args.stratified {
        make_stratified_folds(&ids, &labels, folds, args.seed)?
    } else {
        make_folds(&ids, folds, args.seed)?
    };

    let report = cross_validate(&docs, &plan, &features, corpus.class_count(), &pipeline)?;

    let mut plan_out = Output::create(out_dir, "folds.jsonl")?;
    plan_out.header(cfg)?;
    plan.write(&mut plan_out.out)?;
    plan_out.finish()?;

    let mut out = Output::create(out_dir, REPORT_FILE)?;
    out.header(cfg)?;
    for f in &report.folds {
        out.record(&FoldLine {
            fold: f.fold,
            accuracy: f.accuracy,
            macro_f1: f.macro_f1,
            confusion: f.confusion.clone(),
            predictions: f.predictions.clone(),
        })?;
    }
    out.record(&SummaryLine {
        summary: Summary {
            model: report.model.clone(),
            classes: corpus.labels.names().to_vec(),
            folds: report.folds.len(),
            mean_accuracy: report.mean_accuracy,
            std_accuracy: report.std_accuracy,
            mean_macro_f1: report.mean_macro_f1,
            std_macro_f1: report.std_macro_f1,
        },
    })?;
    let report_path = out.finish()?;

    for f in &report.folds {
        let mut hist = Output::create(out_dir, &format!("history/fold_{:02}.csv", f.fold))?;
        hist.comment_header(cfg)?;
        let mut w = csv::Writer::from_writer(&mut hist.out);
        for e in &f.history {
            w.serialize(e)?;
        }
        w.flush()?;
        drop(w);
        hist.finish()?;
    }

    let mut txt = Output::create(out_dir, "cv_report.txt")?;
    txt.comment_header(cfg)?;
    txt.out.write_all(tables::cv_report(&report).as_bytes())?;
    txt.finish()?;

    println!(
        "{}: accuracy {:.4} ({:.4}), macro-F1 {:.4} ({:.4}) over {} folds -> {}",
        report.model,
        report.mean_accuracy,
        report.std_accuracy,
        report.mean_macro_f1,
        report.std_macro_f1,
        report.folds.len(),
        report_path.display()
    );
    Ok(())
}

fn read_fold_results(path: &Path) -> Result<Vec<FoldResult>> {
    let mut folds = Vec::new();
    for (line, value) in ndjson::read_values(path)? {
        if ndjson::is_header(&value) || value.get("summary").is_some() {
            continue;
        }
        let f: FoldLine = serde_json::from_value(value)
            .with_context(|| format!("{}:{line}: not a fold record", path.display()))?;
        folds.push(FoldResult {
            fold: f.fold,
            predictions: f.predictions,
            accuracy: f.accuracy,
            macro_f1: f.macro_f1,
            confusion: f.confusion,
            history: Vec::new(),
        });
    }
    ensure!(!folds.is_empty(), "{} has no fold records", path.display());
    Ok(folds)
}

pub fn analyze<T: Serialize>(args: &AnalyzeArgs, cfg: &RunConfig<T>, out_dir: &Path) -> Result<()> {
    ensure!(
        args.bucket_edges.windows(2).all(|w| w[0] < w[1]),
        "--bucket-edges must be strictly increasing"
    );
    let corpus = load_labeled_corpus(&args.input.corpus, args.input.labels.as_deref())?;
    let docs = document_subgraphs(&corpus, &args.input, &args.graph, &args.census)?;
    let labels = labels_of(&docs)?;
    let sets: Vec<SubgraphSet> = docs.iter().map(|d| d.subgraphs.clone()).collect();
    let corr_cfg = CorrelationConfig {
        feature: args.feature.into(),
        permutations: usize::try_from(args.permutations)?,
        seed: args.seed,
    };
    let classes = corpus.class_count();
    let report = correlation_analysis(&sets, &labels, classes, &corr_cfg)?;

    let mut out = Output::create(out_dir, "correlation.jsonl")?;
    out.header(cfg)?;
    for e in &report.entries {
        out.record(e)?;
    }
    for s in &report.skipped {
        out.record(&serde_json::json!({ "skipped": s }))?;
    }
    let corr_path = out.finish()?;
    let mut txt = Output::create(out_dir, "correlation.txt")?;
    txt.comment_header(cfg)?;
    txt.out
        .write_all(tables::correlation(&report, &corpus.labels).as_bytes())?;
    txt.finish()?;
    println!(
        "{} correlations ({} skipped) -> {}",
        report.entries.len(),
        report.skipped.len(),
        corr_path.display()
    );

    if let Some(path) = &args.report {
        let folds = read_fold_results(path)?;
        let diag_cfg = DiagnosticsConfig {
            bucket_edges: args.bucket_edges.clone(),
        };
        let diag = diagnostics(&folds, &corpus.documents, classes, &diag_cfg);
        let mut out = Output::create(out_dir, "diagnostics.jsonl")?;
        out.header(cfg)?;
        out.record(&diag)?;
        let diag_path = out.finish()?;
        let mut txt = Output::create(out_dir, "diagnostics.txt")?;
        txt.comment_header(cfg)?;
        txt.out
            .write_all(tables::diagnostics(&diag, &corpus.labels).as_bytes())?;
        txt.finish()?;
        println!("diagnostics -> {}", diag_path.display());
    }
    Ok(())
}

pub fn synth(args: &SynthArgs, out_dir: &Path) -> Result<()> {
    let spec = StructuralCorpusSpec {
        documents: args.documents,
        feature_dim: args.feature_dim,
        seed: args.seed,
        ..StructuralCorpusSpec::default()
    };
    let data = structural_corpus(&spec)?;

    let mut corpus = Output::create(out_dir, "corpus.jsonl")?;
    corpus.header(&spec)?;
    write_corpus(&mut corpus.out, &data.corpus.documents, &data.corpus.labels)?;
    corpus.finish()?;
    let mut features = Output::create(out_dir, "features.jsonl")?;
    features.header(&spec)?;
    data.features.write(&mut features.out)?;
    features.finish()?;
    let mut embeddings = Output::create(out_dir, "embeddings.txt")?;
    data.embeddings.write(&mut embeddings.out)?;
    embeddings.finish()?;

    println!(
        "{} documents, {} embeddings -> {}",
        data.corpus.documents.len(),
        data.embeddings.len(),
        out_dir.display()
    );
    Ok(())
}
