//! `cohgraph`: staged command-line driver.
//!
//! `graphs` builds sentence graphs, `census` counts subgraphs, `train-eval`
//! cross-validates the GCN (or the feed-forward baseline) and `analyze`
//! writes subgraph/label correlations and prediction diagnostics. Every
//! artifact starts with a `run_config` header line.

mod commands;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cohgraph::census::{CensusConfig, CensusMode};
use cohgraph::gcn::TrainConfig;
use cohgraph::hetgraph::EdgeFlags;
use cohgraph::pipeline::{CorrelationFeature, PipelineConfig};
use cohgraph::sentgraph::SimilarityThreshold;

#[derive(Debug, Parser)]
#[command(
    name = "cohgraph",
    version,
    about = "Structural-similarity coherence modeling"
)]
struct Cli {
    /// Directory for every output artifact.
    #[arg(long, global = true, env = "COHGRAPH_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build sentence graphs (graphs.jsonl).
    Graphs(GraphsArgs),
    /// Count k-node subgraphs from a sentence-graph cache (subgraphs.jsonl).
    Census(CensusArgs),
    /// Cross-validate and write cv_report.jsonl, cv_report.txt, folds.jsonl and per-fold histories.
    TrainEval(TrainEvalArgs),
    /// Subgraph/label correlations and prediction diagnostics.
    Analyze(AnalyzeArgs),
    /// Write a synthetic corpus whose classes differ only in structure.
    Synth(SynthArgs),
}

fn parse_delta(s: &str) -> Result<SimilarityThreshold, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    SimilarityThreshold::new(v).map_err(|e| e.to_string())
}

fn parse_unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct GraphOpts {
    /// Noun similarity threshold for a sentence edge.
    #[arg(long, default_value = "0.65", value_parser = parse_delta)]
    delta: SimilarityThreshold,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CensusOpts {
    /// Subgraph size.
    #[arg(short, long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(2..=6))]
    k: u8,
    /// Maximum sentence distance.
    #[arg(short, long, default_value_t = 8)]
    w: usize,
    /// `algorithm-faithful` (strided windows) or `exhaustive` (every subset with span <= w).
    #[arg(long, default_value_t = CensusMode::AlgorithmFaithful)]
    mode: CensusMode,
}

impl CensusOpts {
    fn config(&self) -> anyhow::Result<CensusConfig> {
        Ok(CensusConfig::new(self.k as usize, self.w, self.mode)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct ModelOpts {
    #[arg(long, default_value_t = 240)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_interval)]
    dropout: f64,
    #[arg(long, default_value_t = 0.01, value_parser = parse_positive_f64)]
    lr: f64,
    #[arg(long, default_value_t = 160)]
    epochs: usize,
    /// Add bias terms to both layers.
    #[arg(long)]
    bias: bool,
    /// Drop subgraph-subgraph edges.
    #[arg(long)]
    no_ess: bool,
    /// Drop document-subgraph edges.
    #[arg(long)]
    no_eds: bool,
    /// Train the feed-forward baseline (identity propagation).
    #[arg(long)]
    baseline: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
struct InputOpts {
    /// Corpus file (newline-delimited documents).
    #[arg(long)]
    corpus: PathBuf,
    /// Subgraph-set cache from `census`; when absent, computed from --embeddings.
    #[arg(long, required_unless_present = "embeddings")]
    subgraphs: Option<PathBuf>,
    /// Embedding file, used when no subgraph cache is given.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated label names fixing the class order.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct GraphsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    graph: GraphOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CensusArgs {
    /// Sentence-graph cache (default: <out-dir>/graphs.jsonl).
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[command(flatten)]
    census: CensusOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainEvalArgs {
    #[command(flatten)]
    input: InputOpts,
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    graph: GraphOpts,
    #[command(flatten)]
    census: CensusOpts,
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    /// Seed for the fold split, weight initialization and dropout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep class proportions equal across folds.
    #[arg(long)]
    stratified: bool,
}

impl TrainEvalArgs {
    fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let m = &self.model;
        let train = TrainConfig {
            learning_rate: m.lr,
            epochs: m.epochs,
            seed: self.seed,
            hidden_dim: m.hidden,
            dropout_rate: m.dropout,
            bias: m.bias,
            ..TrainConfig::default()
        };
        train.validate()?;
        Ok(PipelineConfig {
            delta: self.graph.delta,
            census: self.census.config()?,
            edges: EdgeFlags {
                doc_subgraph: !m.no_eds,
                subgraph_subgraph: !m.no_ess,
            },
            train,
            baseline: m.baseline,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    graph: GraphOpts,
    #[command(flatten)]
    census: CensusOpts,
    /// cv_report.jsonl from `train-eval`; enables prediction diagnostics.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-document correlation variable.
    #[arg(long, value_enum, default_value_t = FeatureArg::NormalizedFrequency)]
    feature: FeatureArg,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    permutations: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Upper edges (in words) of the length buckets; an open bucket follows the last.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400")]
    bucket_edges: Vec<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FeatureArg {
    NormalizedFrequency,
    RawCount,
    Presence,
}

impl From<FeatureArg> for CorrelationFeature {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::NormalizedFrequency => CorrelationFeature::NormalizedFrequency,
            FeatureArg::RawCount => CorrelationFeature::RawCount,
            FeatureArg::Presence => CorrelationFeature::Presence,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    documents: usize,
    #[arg(long, default_value_t = 128)]
    feature_dim: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Provenance header written at the top of every artifact.
#[derive(Debug, Serialize)]
struct RunConfig<'a, T: Serialize> {
    command: &'static str,
    out_dir: &'a PathBuf,
    #[serde(flatten)]
    args: &'a T,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        anyhow::ensure!(n > 0, "--workers must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", cli.out_dir.display()))?;
    let out = &cli.out_dir;
    match &cli.command {
        Command::Graphs(a) => commands::graphs(
            a,
            &RunConfig {
                command: "graphs",
                out_dir: out,
                args: a,
            },
            out,
        ),
        Command::Census(a) => commands::census(
            a,
            &RunConfig {
                command: "census",
                out_dir: out,
                args: a,
            },
            out,
        ),
        Command::TrainEval(a) => commands::train_eval(
            a,
            &RunConfig {
                command: "train-eval",
                out_dir: out,
                args: a,
            },
            out,
        ),
        Command::Analyze(a) => commands::analyze(
            a,
            &RunConfig {
                command: "analyze",
                out_dir: out,
                args: a,
            },
            out,
        ),
        Command::Synth(a) => commands::synth(a, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_follow_the_reference_configuration() {
        let cli = Cli::try_parse_from([
            "cohgraph",
            "train-eval",
            "--corpus",
            "c",
            "--features",
            "f",
            "--embeddings",
            "e",
        ])
        .unwrap();
        let Command::TrainEval(a) = cli.command else {
            panic!()
        };
        let cfg = a.pipeline().unwrap();
        assert_eq!(cfg.delta, SimilarityThreshold::DEFAULT);
        assert_eq!((cfg.census.k(), cfg.census.w()), (4, 8));
        assert_eq!(cfg.census.mode(), CensusMode::AlgorithmFaithful);
        assert_eq!(cfg.train.hidden_dim, 240);
        assert_eq!(cfg.train.dropout_rate, 0.5);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.train.epochs, 160);
        assert_eq!(a.folds, 10);
        assert_eq!(cfg.edges, EdgeFlags::default());
        assert!(!cfg.baseline);
    }

    #[test]
    fn folds_below_two_are_rejected() {
        for folds in ["0", "1"] {
            let r = Cli::try_parse_from([
                "cohgraph",
                "train-eval",
                "--corpus",
                "c",
                "--features",
                "f",
                "--embeddings",
                "e",
                "--folds",
                folds,
            ]);
            assert!(r.is_err(), "--folds {folds}");
        }
    }

    #[test]
    fn invalid_delta_and_k_are_rejected() {
        assert!(Cli::try_parse_from([
            "cohgraph",
            "graphs",
            "--corpus",
            "c",
            "--embeddings",
            "e",
            "--delta",
            "0"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["cohgraph", "census", "-k", "7"]).is_err());
    }

    #[test]
    fn subgraphs_or_embeddings_required() {
        assert!(Cli::try_parse_from(["cohgraph", "analyze", "--corpus", "c"]).is_err());
    }
}
