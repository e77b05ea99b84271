use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use cohgraph::census::canonical_signature;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cohgraph"));
    c.env_remove("COHGRAPH_OUT_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cohgraph")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn records(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Synthetic corpus plus a feature file that separates the classes.
fn separable_fixture(dir: &Path) -> PathBuf {
    ok(
        dir,
        &[
            "--out-dir",
            "data",
            "synth",
            "--documents",
            "40",
            "--feature-dim",
            "4",
        ],
    );
    let corpus = records(&dir.join("data/corpus.jsonl"));
    let mut lines = String::new();
    for (i, doc) in corpus.iter().filter(|r| r.get("id").is_some()).enumerate() {
        let sign = if doc["label"] == "chained" { 2.0 } else { -2.0 };
        let jitter = (i % 5) as f64 * 0.01;
        lines += &format!(
            "{{\"id\":{},\"feature\":[{sign},{jitter},0.5,-0.5]}}\n",
            doc["id"]
        );
    }
    fs::write(dir.join("data/separable.jsonl"), lines).unwrap();
    dir.join("data")
}

const TRAIN: &[&str] = &[
    "train-eval",
    "--corpus",
    "data/corpus.jsonl",
    "--features",
    "data/separable.jsonl",
    "--embeddings",
    "data/embeddings.txt",
    "-k",
    "4",
    "-w",
    "4",
    "--hidden",
    "16",
    "--epochs",
    "60",
    "--folds",
    "4",
    "--seed",
    "5",
];

#[test]
fn graphs_writes_one_record_per_document_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["--out-dir", "data", "synth", "--documents", "12"]);
    let args = [
        "graphs",
        "--corpus",
        "data/corpus.jsonl",
        "--embeddings",
        "data/embeddings.txt",
    ];
    ok(dir, &args);
    let first = fs::read(dir.join("out/graphs.jsonl")).unwrap();
    ok(dir, &args);
    assert_eq!(first, fs::read(dir.join("out/graphs.jsonl")).unwrap());

    let recs = records(&dir.join("out/graphs.jsonl"));
    assert!(recs[0].get("run_config").is_some());
    assert_eq!(recs.len(), 13);
}

#[test]
fn missing_embeddings_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["--out-dir", "data", "synth", "--documents", "4"]);
    let out = run(
        dir,
        &[
            "graphs",
            "--corpus",
            "data/corpus.jsonl",
            "--embeddings",
            "nope.txt",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
    let out = run(dir, &["graphs", "--corpus", "data/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_folds_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        &[
            "train-eval",
            "--corpus",
            "c",
            "--features",
            "f",
            "--embeddings",
            "e",
            "--folds",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parse_errors_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("corpus.jsonl"),
        "{\"id\":\"a\",\"label\":0,\"sentences\":[{\"nouns\":[\"x\"]}]}\n{\"id\":\n",
    )
    .unwrap();
    fs::write(dir.join("emb.txt"), "x 1 0\n").unwrap();
    let out = run(
        dir,
        &[
            "graphs",
            "--corpus",
            "corpus.jsonl",
            "--embeddings",
            "emb.txt",
        ],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("corpus.jsonl") && err.contains('2'), "{err}");
}

#[test]
fn census_on_hand_written_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("graphs.jsonl"),
        concat!(
            "{\"id\":\"path\",\"n\":5,\"edges\":[[1,2],[2,3],[3,4],[4,5]]}\n",
            "{\"id\":\"dense\",\"n\":6,\"edges\":[[1,2],[1,3],[2,3],[2,4],[4,6],[5,6]]}\n",
            "{\"id\":\"short\",\"n\":2,\"edges\":[[1,2]]}\n",
        ),
    )
    .unwrap();
    ok(
        dir,
        &[
            "census",
            "--graphs",
            "graphs.jsonl",
            "-k",
            "3",
            "-w",
            "3",
            "--mode",
            "exhaustive",
        ],
    );
    let recs = records(&dir.join("out/subgraphs.jsonl"));
    assert_eq!(recs.len(), 4);
    let pairs = [(1, 2), (1, 3), (2, 3)];
    let classes: BTreeSet<String> = (0..8u8)
        .map(|mask| {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            canonical_signature(3, &edges).unwrap().to_string()
        })
        .collect();
    assert_eq!(classes.len(), 6);
    for r in &recs[1..] {
        for (sig, _) in r["counts"].as_object().unwrap() {
            assert!(classes.contains(sig), "{sig}");
        }
    }
    assert_eq!(recs[3]["id"], "short");
    assert!(recs[3]["counts"].as_object().unwrap().is_empty());
    let path_total: u64 = recs[1]["counts"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    // C(5,3) minus the three triples containing both 1 and 5.
    assert_eq!(path_total, 7);
}

#[test]
fn separable_corpus_scores_perfectly_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    separable_fixture(dir);
    ok(dir, TRAIN);
    let report = records(&dir.join("out/cv_report.jsonl"));
    let summary = &report.last().unwrap()["summary"];
    assert_eq!(summary["model"], "gcn");
    assert_eq!(summary["mean_accuracy"], 1.0);
    assert_eq!(report.len(), 1 + 4 + 1);

    let names = [
        "cv_report.jsonl",
        "cv_report.txt",
        "folds.jsonl",
        "history/fold_00.csv",
        "history/fold_03.csv",
    ];
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(dir.join("out").join(n)).unwrap())
        .collect();
    let mut args = TRAIN.to_vec();
    args.extend(["--workers", "1"]);
    ok(dir, &args);
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(&fs::read(dir.join("out").join(n)).unwrap(), bytes, "{n}");
    }
    let csv = fs::read_to_string(dir.join("out/history/fold_00.csv")).unwrap();
    assert!(csv.starts_with("# {\"run_config\""));
    assert_eq!(csv.lines().nth(1), Some("epoch,loss,train_acc"));
    assert_eq!(csv.lines().count(), 2 + 60);
}

#[test]
fn baseline_switch_labels_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    separable_fixture(dir);
    let mut args = TRAIN.to_vec();
    args.push("--baseline");
    let stdout = ok(dir, &args);
    assert!(stdout.starts_with("baseline:"));
    let report = records(&dir.join("out/cv_report.jsonl"));
    assert_eq!(report[0]["run_config"]["model"]["baseline"], true);
    assert_eq!(report.last().unwrap()["summary"]["model"], "baseline");
}

#[test]
fn staged_pipeline_with_env_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    separable_fixture(dir);
    let staged = |args: &[&str]| {
        let out = bin()
            .current_dir(dir)
            .env("COHGRAPH_OUT_DIR", "stage")
            .args(args)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    staged(&[
        "graphs",
        "--corpus",
        "data/corpus.jsonl",
        "--embeddings",
        "data/embeddings.txt",
    ]);
    staged(&["census", "-k", "4", "-w", "4"]);
    let mut args: Vec<&str> = TRAIN.to_vec();
    let pos = args.iter().position(|a| *a == "--embeddings").unwrap();
    args.splice(pos..pos + 2, ["--subgraphs", "stage/subgraphs.jsonl"]);
    args.extend(["--labels", "scattered,chained", "--stratified"]);
    staged(&args);
    staged(&[
        "analyze",
        "--corpus",
        "data/corpus.jsonl",
        "--subgraphs",
        "stage/subgraphs.jsonl",
        "-k",
        "4",
        "--labels",
        "scattered,chained",
        "--report",
        "stage/cv_report.jsonl",
        "--permutations",
        "200",
    ]);
    let out = dir.join("stage");
    for f in [
        "graphs.jsonl",
        "subgraphs.jsonl",
        "cv_report.jsonl",
        "correlation.jsonl",
        "diagnostics.jsonl",
    ] {
        let recs = records(&out.join(f));
        assert!(recs[0].get("run_config").is_some(), "{f}");
    }
    assert!(!out.join("..").join("out").exists());

    let summary = records(&out.join("cv_report.jsonl")).last().unwrap()["summary"].clone();
    assert_eq!(
        summary["classes"],
        serde_json::json!(["scattered", "chained"])
    );
    let diag = &records(&out.join("diagnostics.jsonl"))[1];
    let predicted: u64 = diag["predicted_histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(predicted, 40);

    let corr = records(&out.join("correlation.jsonl"));
    for e in corr.iter().skip(1).filter(|e| e.get("r").is_some()) {
        let p = e["p_value"].as_f64().unwrap();
        assert!((1.0 / 201.0..=1.0).contains(&p));
    }
}

#[test]
fn mismatched_cache_k_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    separable_fixture(dir);
    ok(
        dir,
        &[
            "graphs",
            "--corpus",
            "data/corpus.jsonl",
            "--embeddings",
            "data/embeddings.txt",
        ],
    );
    ok(dir, &["census", "-k", "3", "-w", "4"]);
    let out = run(
        dir,
        &[
            "analyze",
            "--corpus",
            "data/corpus.jsonl",
            "--subgraphs",
            "out/subgraphs.jsonl",
            "-k",
            "4",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("-k 3"));
}
