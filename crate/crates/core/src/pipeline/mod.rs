//! Fold training, inductive evaluation and cross-validation.
//!
//! Each fold builds its subgraph vocabulary and doc–subgraph graph from the
//! training documents only and trains the network on that graph. Every test
//! document is then attached to the frozen graph on its own, the extended
//! graph is re-normalized, and the new node's class is read off an
//! evaluation-mode forward pass. Test documents never see each other.

mod analysis;
mod metrics;

pub use analysis::{
    correlation_analysis, diagnostics, pearson, CorrelationConfig, CorrelationEntry,
    CorrelationFeature, CorrelationReport, Diagnostics, DiagnosticsConfig, LengthBucket,
    SkippedCorrelation,
};
pub use metrics::{mean_std, metrics, Metrics};

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{mine_subgraphs, CensusConfig, SubgraphSet};
use crate::corpus::{Document, EmbeddingTable, FeatureMatrix, FoldPlan};
use crate::gcn::{self, argmax, EpochStats, GcnModel, Propagation, TrainConfig};
use crate::hetgraph::{
    attach_document, build_hetero_graph, build_vocabulary, normalize, EdgeFlags, HeteroGraph,
    SubgraphVocabulary,
};
use crate::sentgraph::{build_sentence_graph, SimilarityThreshold};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub delta: SimilarityThreshold,
    pub census: CensusConfig,
    pub edges: EdgeFlags,
    pub train: TrainConfig,
    /// Identity propagation (feed-forward baseline) instead of the graph.
    pub baseline: bool,
}

impl PipelineConfig {
    pub fn model_name(&self) -> &'static str {
        if self.baseline {
            "baseline"
        } else {
            "gcn"
        }
    }
}

/// A document reduced to what training needs: id, label and subgraph counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentSubgraphs {
    pub id: String,
    pub label: Option<usize>,
    pub subgraphs: SubgraphSet,
}

/// Sentence graph plus census for one document.
pub fn document_subgraphs(
    doc: &Document,
    table: &EmbeddingTable,
    delta: SimilarityThreshold,
    census: &CensusConfig,
) -> Result<DocumentSubgraphs> {
    let graph = build_sentence_graph(doc, table, delta)?;
    Ok(DocumentSubgraphs {
        id: doc.id.clone(),
        label: doc.label,
        subgraphs: mine_subgraphs(&graph, census),
    })
}

/// [`document_subgraphs`] over a slice of documents, in parallel, order preserved.
pub fn prepare_documents(
    docs: &[Document],
    table: &EmbeddingTable,
    delta: SimilarityThreshold,
    census: &CensusConfig,
) -> Result<Vec<DocumentSubgraphs>> {
    docs.par_iter()
        .map(|d| document_subgraphs(d, table, delta, census))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

/// A model trained on one fold's training documents, with the frozen graph it was trained on.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub vocab: SubgraphVocabulary,
    pub graph: HeteroGraph,
    pub model: GcnModel,
    pub history: Vec<EpochStats>,
    baseline: bool,
    /// `(N + M) x d` node features: document rows then zero subgraph rows.
    features: Array2<f64>,
}

fn check_features_cover(docs: &[DocumentSubgraphs], features: &FeatureMatrix) -> Result<()> {
    features.check_covers(docs.iter().map(|d| d.id.as_str()))
}

pub fn train_fold(
    train: &[DocumentSubgraphs],
    features: &FeatureMatrix,
    classes: usize,
    cfg: &PipelineConfig,
) -> Result<TrainedFold> {
    if train.is_empty() {
        return Err(Error::Validation("fold has no training documents".into()));
    }
    check_features_cover(train, features)?;
    let labels: Vec<usize> = train
        .iter()
        .map(|d| {
            d.label.ok_or_else(|| {
                Error::Validation(format!("training document {:?} has no label", d.id))
            })
        })
        .collect::<Result<_>>()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    cfg.train.validate()?;

    let sets: Vec<SubgraphSet> = train.iter().map(|d| d.subgraphs.clone()).collect();
    let vocab = build_vocabulary(&sets)?;
    let graph = build_hetero_graph(&vocab, &sets, cfg.edges)?;

    let n = train.len();
    let d = features.dimension();
    let mut x = Array2::zeros((graph.order(), d));
    for (i, doc) in train.iter().enumerate() {
        let row = features.get(&doc.id).expect("coverage checked");
        x.row_mut(i).assign(&ndarray::ArrayView1::from(row));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut model = GcnModel::new(
        d,
        cfg.train.hidden_dim,
        classes,
        cfg.train.dropout_rate,
        cfg.train.bias,
        &mut init_rng,
    )?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    dropout_rng.set_stream(1);

    let mask: Vec<usize> = (0..n).collect();
    let history = if cfg.baseline {
        let docs_only = x.slice(s![..n, ..]).to_owned();
        gcn::train(
            &mut model,
            Propagation::Identity,
            &docs_only,
            &labels,
            &mask,
            &cfg.train,
            &mut dropout_rng,
        )?
    } else {
        let prop = normalize(&graph);
        gcn::train(
            &mut model,
            Propagation::Matrix(&prop),
            &x,
            &labels,
            &mask,
            &cfg.train,
            &mut dropout_rng,
        )?
    };

    Ok(TrainedFold {
        vocab,
        graph,
        model,
        history,
        baseline: cfg.baseline,
        features: x,
    })
}

impl TrainedFold {
    pub fn is_baseline(&self) -> bool {
        self.baseline
    }

    /// Predicts one unseen document from its subgraph counts and feature vector.
    pub fn predict(&self, subgraphs: &SubgraphSet, feature: &[f64]) -> Result<Prediction> {
        if feature.len() != self.model.d_in() {
            return Err(Error::Shape(format!(
                "feature has {} components, model expects {}",
                feature.len(),
                self.model.d_in()
            )));
        }
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let row = ndarray::ArrayView1::from(feature);
        let probs = if self.baseline {
            let x = row.insert_axis(ndarray::Axis(0)).to_owned();
            let (_, p) = gcn::baseline_forward(&self.model, &x, false, &mut unused)?;
            p.row(0).to_vec()
        } else {
            let extended = attach_document(&self.graph, &self.vocab, subgraphs)?;
            let prop = normalize(&extended);
            let n = self.graph.n_docs();
            let mut x = Array2::zeros((extended.order(), self.features.ncols()));
            x.slice_mut(s![..n, ..])
                .assign(&self.features.slice(s![..n, ..]));
            x.row_mut(n).assign(&row);
            let (_, p) = gcn::forward(
                &self.model,
                Propagation::Matrix(&prop),
                &x,
                false,
                &mut unused,
            )?;
            p.row(n).to_vec()
        };
        let class = argmax(ndarray::ArrayView1::from(&probs[..]));
        Ok(Prediction { class, probs })
    }

    /// Predicts each document independently (in parallel), preserving order.
    pub fn predict_batch(
        &self,
        docs: &[DocumentSubgraphs],
        features: &FeatureMatrix,
    ) -> Result<Vec<Prediction>> {
        check_features_cover(docs, features)?;
        docs.par_iter()
            .map(|d| self.predict(&d.subgraphs, features.get(&d.id).expect("coverage checked")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub predictions: Vec<PredictionRecord>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub history: Vec<EpochStats>,
}

/// Trains on `train` and scores every document of `test` inductively.
pub fn run_fold_prepared(
    fold: usize,
    train: &[DocumentSubgraphs],
    test: &[DocumentSubgraphs],
    features: &FeatureMatrix,
    classes: usize,
    cfg: &PipelineConfig,
) -> Result<FoldResult> {
    check_features_cover(train, features)?;
    check_features_cover(test, features)?;
    let golds: Vec<usize> = test
        .iter()
        .map(|d| {
            d.label
                .ok_or_else(|| Error::Validation(format!("test document {:?} has no label", d.id)))
        })
        .collect::<Result<_>>()?;

    let trained = train_fold(train, features, classes, cfg)?;
    let preds = trained.predict_batch(test, features)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.class).collect();
    let m = metrics(&predicted, &golds, classes)?;

    Ok(FoldResult {
        fold,
        predictions: test
            .iter()
            .zip(golds.iter().zip(&predicted))
            .map(|(d, (&gold, &predicted))| PredictionRecord {
                id: d.id.clone(),
                gold,
                predicted,
            })
            .collect(),
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        confusion: m.confusion,
        history: trained.history,
    })
}

/// [`run_fold_prepared`] starting from raw documents.
pub fn run_fold(
    fold: usize,
    train: &[Document],
    test: &[Document],
    embeddings: &EmbeddingTable,
    features: &FeatureMatrix,
    classes: usize,
    cfg: &PipelineConfig,
) -> Result<FoldResult> {
    let check = |docs: &[Document]| features.check_covers(docs.iter().map(|d| d.id.as_str()));
    check(train)?;
    check(test)?;
    let train = prepare_documents(train, embeddings, cfg.delta, &cfg.census)?;
    let test = prepare_documents(test, embeddings, cfg.delta, &cfg.census)?;
    run_fold_prepared(fold, &train, &test, features, classes, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub config: PipelineConfig,
    pub classes: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

impl CvReport {
    fn from_folds(folds: Vec<FoldResult>, classes: usize, cfg: &PipelineConfig) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let f1: Vec<f64> = folds.iter().map(|f| f.macro_f1).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_macro_f1, std_macro_f1) = mean_std(&f1);
        CvReport {
            model: cfg.model_name().to_owned(),
            config: *cfg,
            classes,
            folds,
            mean_accuracy,
            std_accuracy,
            mean_macro_f1,
            std_macro_f1,
        }
    }
}

/// Runs every fold of `plan` (in parallel) over prepared documents.
pub fn cross_validate(
    docs: &[DocumentSubgraphs],
    plan: &FoldPlan,
    features: &FeatureMatrix,
    classes: usize,
    cfg: &PipelineConfig,
) -> Result<CvReport> {
    let by_id: std::collections::HashMap<&str, &DocumentSubgraphs> =
        docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<DocumentSubgraphs>> {
        ids.iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|d| (*d).clone()).ok_or_else(|| {
                    Error::Validation(format!("fold references unknown document {id:?}"))
                })
            })
            .collect()
    };
    let folds = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let train = lookup(&f.train)?;
            let test = lookup(&f.test)?;
            run_fold_prepared(i, &train, &test, features, classes, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(folds, classes, cfg))
}

/// Prepares raw documents once, then cross-validates.
pub fn cross_validate_documents(
    docs: &[Document],
    embeddings: &EmbeddingTable,
    features: &FeatureMatrix,
    plan: &FoldPlan,
    classes: usize,
    cfg: &PipelineConfig,
) -> Result<CvReport> {
    features.check_covers(docs.iter().map(|d| d.id.as_str()))?;
    let prepared = prepare_documents(docs, embeddings, cfg.delta, &cfg.census)?;
    cross_validate(&prepared, plan, features, classes, cfg)
}
