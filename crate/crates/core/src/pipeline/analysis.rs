//! Post-hoc analyses: subgraph/label correlation and prediction diagnostics.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FoldResult;
use crate::census::{Signature, SubgraphSet};
use crate::corpus::Document;
use crate::{Error, Result};

/// Per-document value of a subgraph type used as the correlation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationFeature {
    /// Count divided by the document's total subgraph count.
    #[default]
    NormalizedFrequency,
    RawCount,
    /// 1 when the type occurs in the document, else 0.
    Presence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub feature: CorrelationFeature,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            feature: CorrelationFeature::NormalizedFrequency,
            permutations: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub signature: Signature,
    pub class: usize,
    pub r: f64,
    pub p_value: f64,
    /// Documents containing the subgraph type.
    pub support: usize,
    /// Documents of the class.
    pub class_support: usize,
    /// Documents of the class containing the subgraph type.
    pub joint_support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCorrelation {
    pub signature: Signature,
    pub class: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Grouped by class (ascending), `r` descending within a class.
    pub entries: Vec<CorrelationEntry>,
    pub skipped: Vec<SkippedCorrelation>,
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss = c.iter().map(|x| x * x).sum();
    (c, ss)
}

/// Pearson correlation; `None` when either side has zero variance or the
/// lengths differ or are below 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (cx, sx) = centered(x);
    let (cy, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    let cov: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    Some((cov / (sx * sy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided permutation p-value `(#{|r_perm| >= |r|} + 1) / (P + 1)`.
fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    r: f64,
    permutations: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let (cx, sx) = centered(x);
    let (mut cy, sy) = centered(y);
    let denom = (sx * sy).sqrt();
    let target = r.abs() - 1e-12;
    let mut hits = 0usize;
    for _ in 0..permutations {
        cy.shuffle(rng);
        let cov: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
        if (cov / denom).abs() >= target {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (permutations + 1) as f64
}

fn feature_value(set: &SubgraphSet, sig: &Signature, feature: CorrelationFeature) -> f64 {
    let c = set.get(sig);
    match feature {
        CorrelationFeature::RawCount => c as f64,
        CorrelationFeature::Presence => f64::from(u8::from(c > 0)),
        CorrelationFeature::NormalizedFrequency => {
            let total = set.total();
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        }
    }
}

/// Correlates every (subgraph type, class) pair over documents.
///
/// `sets[i]` and `labels[i]` describe document `i`. Each pair's permutation
/// test draws from its own ChaCha8 stream (`seed`, stream = pair index), so
/// p-values do not depend on which other pairs are computed.
pub fn correlation_analysis(
    sets: &[SubgraphSet],
    labels: &[usize],
    classes: usize,
    cfg: &CorrelationConfig,
) -> Result<CorrelationReport> {
    if sets.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} subgraph sets for {} labels",
            sets.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    let signatures: Vec<Signature> = sets
        .iter()
        .flat_map(|s| s.signatures().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let tasks: Vec<(usize, Signature, usize)> = signatures
        .iter()
        .flat_map(|&sig| (0..classes).map(move |c| (sig, c)))
        .enumerate()
        .map(|(i, (sig, c))| (i, sig, c))
        .collect();

    let results: Vec<std::result::Result<CorrelationEntry, SkippedCorrelation>> = tasks
        .par_iter()
        .map(|&(index, signature, class)| {
            let x: Vec<f64> = sets
                .iter()
                .map(|s| feature_value(s, &signature, cfg.feature))
                .collect();
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| f64::from(u8::from(l == class)))
                .collect();
            let Some(r) = pearson(&x, &y) else {
                return Err(SkippedCorrelation {
                    signature,
                    class,
                    reason: "zero variance".into(),
                });
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(index as u64);
            let p_value = permutation_p_value(&x, &y, r, cfg.permutations, &mut rng);
            let present: Vec<bool> = sets.iter().map(|s| s.get(&signature) > 0).collect();
            Ok(CorrelationEntry {
                signature,
                class,
                r,
                p_value,
                support: present.iter().filter(|&&p| p).count(),
                class_support: labels.iter().filter(|&&l| l == class).count(),
                joint_support: present
                    .iter()
                    .zip(labels)
                    .filter(|(&p, &l)| p && l == class)
                    .count(),
            })
        })
        .collect();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(s) => skipped.push(s),
        }
    }
    entries.sort_by(|a, b| {
        a.class
            .cmp(&b.class)
            .then(b.r.total_cmp(&a.r))
            .then(a.signature.cmp(&b.signature))
    });
    Ok(CorrelationReport { entries, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Upper edges of the length buckets in words; a final open bucket is appended.
    pub bucket_edges: Vec<usize>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            bucket_edges: vec![100, 200, 300, 400],
        }
    }
}

/// Documents whose word count lies in `[lower, upper)` (`upper = None` is unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub lower: usize,
    pub upper: Option<usize>,
    pub documents: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub predicted_histogram: Vec<usize>,
    pub gold_histogram: Vec<usize>,
    /// Recall per gold class; `None` for classes with no test documents.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub length_buckets: Vec<LengthBucket>,
}

/// Predicted-label distribution, per-class accuracy and accuracy by document
/// length over all test predictions of `folds`. Predictions whose document
/// is missing from `docs` are left out of the length buckets only.
pub fn diagnostics(
    folds: &[FoldResult],
    docs: &[Document],
    classes: usize,
    cfg: &DiagnosticsConfig,
) -> Diagnostics {
    let lengths: HashMap<&str, usize> = docs
        .iter()
        .map(|d| (d.id.as_str(), d.word_count()))
        .collect();
    let mut bounds: Vec<(usize, Option<usize>)> = Vec::new();
    let mut lower = 0;
    for &edge in &cfg.bucket_edges {
        bounds.push((lower, Some(edge)));
        lower = edge;
    }
    bounds.push((lower, None));

    let mut predicted_histogram = vec![0; classes];
    let mut gold_histogram = vec![0; classes];
    let mut gold_correct = vec![0; classes];
    let mut buckets: Vec<LengthBucket> = bounds
        .iter()
        .map(|&(lower, upper)| LengthBucket {
            lower,
            upper,
            documents: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();

    for p in folds.iter().flat_map(|f| &f.predictions) {
        let hit = p.predicted == p.gold;
        if let Some(h) = predicted_histogram.get_mut(p.predicted) {
            *h += 1;
        }
        if p.gold < classes {
            gold_histogram[p.gold] += 1;
            gold_correct[p.gold] += usize::from(hit);
        }
        if let Some(&len) = lengths.get(p.id.as_str()) {
            if let Some(b) = buckets
                .iter_mut()
                .find(|b| len >= b.lower && b.upper.is_none_or(|u| len < u))
            {
                b.documents += 1;
                b.correct += usize::from(hit);
            }
        }
    }
    for b in &mut buckets {
        b.accuracy = (b.documents > 0).then(|| b.correct as f64 / b.documents as f64);
    }
    Diagnostics {
        per_class_accuracy: gold_histogram
            .iter()
            .zip(&gold_correct)
            .map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64))
            .collect(),
        predicted_histogram,
        gold_histogram,
        length_buckets: buckets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::canonical_signature;
    use crate::pipeline::PredictionRecord;
    use itertools::Itertools;

    #[test]
    fn pearson_perfect_linear() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    /// Exact two-sided permutation p-value by enumerating all orderings of `y`.
    fn exact_p(x: &[f64], y: &[f64]) -> f64 {
        let r = pearson(x, y).unwrap().abs();
        let perms: Vec<Vec<f64>> = y.iter().copied().permutations(y.len()).collect();
        let hits = perms
            .iter()
            .filter(|p| pearson(x, p).unwrap().abs() >= r - 1e-12)
            .count();
        hits as f64 / perms.len() as f64
    }

    #[test]
    fn permutation_p_value_matches_enumeration() {
        let x = [0.0, 0.0, 1.0, 1.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let exact = exact_p(&x, &y);
        assert!((exact - 1.0 / 3.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = permutation_p_value(&x, &y, 1.0, 10_000, &mut rng);
        assert!((p - exact).abs() < 0.02, "p = {p}");
    }

    #[test]
    fn correlation_entries_sorted_and_bounded() {
        let a = canonical_signature(3, &[]).unwrap();
        let b = canonical_signature(3, &[(1, 2), (2, 3)]).unwrap();
        let sets: Vec<SubgraphSet> = (0..8)
            .map(|i| {
                let counts = if i % 2 == 0 {
                    vec![(a, 3), (b, 1)]
                } else {
                    vec![(a, 1), (b, 3 + i as u64)]
                };
                SubgraphSet::from_counts(3, counts).unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let cfg = CorrelationConfig {
            permutations: 500,
            ..CorrelationConfig::default()
        };
        let report = correlation_analysis(&sets, &labels, 2, &cfg).unwrap();
        assert_eq!(report.entries.len(), 4);
        for e in &report.entries {
            assert!((-1.0..=1.0).contains(&e.r));
            assert!(e.p_value >= 1.0 / 501.0 && e.p_value <= 1.0);
        }
        assert!(report
            .entries
            .windows(2)
            .all(|w| w[0].class < w[1].class || w[0].r >= w[1].r));
        let top1 = report.entries.iter().find(|e| e.class == 1).unwrap();
        assert_eq!(top1.signature, b);
        assert_eq!(
            report,
            correlation_analysis(&sets, &labels, 2, &cfg).unwrap()
        );
    }

    #[test]
    fn constant_feature_is_skipped() {
        let a = canonical_signature(3, &[]).unwrap();
        let sets = vec![SubgraphSet::from_counts(3, [(a, 2)]).unwrap(); 4];
        let report =
            correlation_analysis(&sets, &[0, 1, 0, 1], 2, &CorrelationConfig::default()).unwrap();
        assert!(report.entries.is_empty());
        assert_eq!(report.skipped.len(), 2);
    }

    fn fold(preds: &[(&str, usize, usize)]) -> FoldResult {
        FoldResult {
            fold: 0,
            predictions: preds
                .iter()
                .map(|&(id, gold, predicted)| PredictionRecord {
                    id: id.into(),
                    gold,
                    predicted,
                })
                .collect(),
            accuracy: 0.0,
            macro_f1: 0.0,
            confusion: vec![],
            history: vec![],
        }
    }

    fn doc(id: &str, words: usize) -> Document {
        Document {
            id: id.into(),
            label: None,
            sentences: vec![crate::corpus::Sentence {
                index: 1,
                nouns: vec![],
                text: Some(vec!["w"; words].join(" ")),
            }],
        }
    }

    #[test]
    fn histogram_of_single_class() {
        let f = fold(&[("a", 0, 1), ("b", 1, 1), ("c", 2, 1)]);
        let d = diagnostics(&[f], &[], 3, &DiagnosticsConfig::default());
        assert_eq!(d.predicted_histogram, vec![0, 3, 0]);
        assert_eq!(d.per_class_accuracy, vec![Some(0.0), Some(1.0), Some(0.0)]);
    }

    #[test]
    fn perfect_per_class_accuracy() {
        let f = fold(&[("a", 0, 0), ("b", 1, 1), ("c", 1, 1)]);
        let d = diagnostics(&[f], &[], 2, &DiagnosticsConfig::default());
        assert_eq!(d.per_class_accuracy, vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn length_buckets_tally() {
        let f = fold(&[
            ("short1", 0, 0),
            ("short2", 1, 1),
            ("long1", 0, 1),
            ("long2", 1, 0),
        ]);
        let docs = [
            doc("short1", 50),
            doc("short2", 99),
            doc("long1", 100),
            doc("long2", 180),
        ];
        let cfg = DiagnosticsConfig {
            bucket_edges: vec![100, 200],
        };
        let d = diagnostics(&[f], &docs, 2, &cfg);
        assert_eq!(d.length_buckets.len(), 3);
        assert_eq!(
            (d.length_buckets[0].documents, d.length_buckets[0].accuracy),
            (2, Some(1.0))
        );
        assert_eq!(
            (d.length_buckets[1].documents, d.length_buckets[1].accuracy),
            (2, Some(0.0))
        );
        assert_eq!(
            (d.length_buckets[2].documents, d.length_buckets[2].accuracy),
            (0, None)
        );
    }
}
