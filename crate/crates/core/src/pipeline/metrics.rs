use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, macro-F1 (per-class F1 is 0 when precision + recall is 0) and
/// the confusion matrix.
pub fn metrics(preds: &[usize], golds: &[usize], classes: usize) -> Result<Metrics> {
    if preds.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if let Some(&bad) = preds.iter().chain(golds).find(|&&c| c >= classes) {
        return Err(Error::Validation(format!(
            "class {bad} outside {classes} classes"
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &g) in preds.iter().zip(golds) {
        confusion[g][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / preds.len() as f64;

    let f1_sum: f64 = (0..classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let predicted: usize = (0..classes).map(|g| confusion[g][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let precision = if predicted > 0 {
                tp / predicted as f64
            } else {
                0.0
            };
            let recall = if actual > 0 { tp / actual as f64 } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Ok(Metrics {
        accuracy,
        macro_f1: f1_sum / classes as f64,
        confusion,
    })
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn majority_class_hand_case() {
        let m = metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion, vec![vec![2, 0], vec![2, 0]]);
    }

    #[test]
    fn single_class_zero_convention() {
        let m = metrics(&[1, 1, 1], &[1, 1, 1], 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(metrics(&[], &[], 2).is_err());
        assert!(metrics(&[0], &[0, 1], 2).is_err());
        assert!(metrics(&[2], &[0], 2).is_err());
    }

    #[test]
    fn mean_and_population_std() {
        let (m, s) = mean_std(&[0.5, 1.0]);
        assert_eq!(m, 0.75);
        assert_eq!(s, 0.25);
    }

    proptest::proptest! {
        #[test]
        fn accuracy_is_confusion_trace(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..50)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let m = metrics(&p, &g, 4).unwrap();
            let trace: usize = (0..4).map(|c| m.confusion[c][c]).sum();
            let total: usize = m.confusion.iter().flatten().sum();
            proptest::prop_assert_eq!(m.accuracy, trace as f64 / total as f64);
            proptest::prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        }
    }
}
