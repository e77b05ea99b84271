//! Plain-text renderings of reports.

use std::fmt::Write;

use cohgraph::corpus::LabelMap;
use cohgraph::pipeline::{CorrelationReport, CvReport, Diagnostics};

fn label(labels: &LabelMap, c: usize) -> String {
    labels.name(c).map_or_else(|| c.to_string(), str::to_owned)
}

pub fn cv_report(r: &CvReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", r.model);
    let _ = writeln!(s, "{:>6}  {:>9}  {:>9}", "fold", "accuracy", "macro-F1");
    for f in &r.folds {
        let _ = writeln!(s, "{:>6}  {:>9.4}  {:>9.4}", f.fold, f.accuracy, f.macro_f1);
    }
    let _ = writeln!(
        s,
        "{:>6}  {:>9.4}  {:>9.4}",
        "mean", r.mean_accuracy, r.mean_macro_f1
    );
    let _ = writeln!(
        s,
        "{:>6}  {:>9.4}  {:>9.4}",
        "std", r.std_accuracy, r.std_macro_f1
    );
    s
}

pub fn correlation(r: &CorrelationReport, labels: &LabelMap) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12}  {:<14}  {:>8}  {:>8}  {:>7}  {:>7}",
        "class", "signature", "r", "p", "support", "joint"
    );
    for e in &r.entries {
        let _ = writeln!(
            s,
            "{:<12}  {:<14}  {:>8.4}  {:>8.4}  {:>7}  {:>7}",
            label(labels, e.class),
            e.signature.to_string(),
            e.r,
            e.p_value,
            e.support,
            e.joint_support
        );
    }
    if !r.skipped.is_empty() {
        let _ = writeln!(s, "skipped:");
        for k in &r.skipped {
            let _ = writeln!(
                s,
                "  {:<12}  {:<14}  {}",
                label(labels, k.class),
                k.signature.to_string(),
                k.reason
            );
        }
    }
    s
}

pub fn diagnostics(d: &Diagnostics, labels: &LabelMap) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12}  {:>9}  {:>6}  {:>8}",
        "class", "predicted", "gold", "recall"
    );
    for c in 0..d.predicted_histogram.len() {
        let recall = d.per_class_accuracy[c].map_or_else(|| "-".to_owned(), |a| format!("{a:.4}"));
        let _ = writeln!(
            s,
            "{:<12}  {:>9}  {:>6}  {:>8}",
            label(labels, c),
            d.predicted_histogram[c],
            d.gold_histogram[c],
            recall
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<12}  {:>9}  {:>8}", "words", "documents", "accuracy");
    for b in &d.length_buckets {
        let range = match b.upper {
            Some(u) => format!("[{}, {})", b.lower, u),
            None => format!("[{}, inf)", b.lower),
        };
        let acc = b
            .accuracy
            .map_or_else(|| "-".to_owned(), |a| format!("{a:.4}"));
        let _ = writeln!(s, "{range:<12}  {:>9}  {acc:>8}", b.documents);
    }
    s
}
