//! Classification report in the usual precision / recall / F1 / support layout.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub weighted_avg: ClassMetrics,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Builds the report; undefined ratios (no predictions or no support) count as 0.
pub fn classification_report(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> ClassificationReport {
    assert_eq!(
        truth.len(),
        predicted.len(),
        "truth and prediction lengths differ"
    );
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        support[t] += 1;
        pred_count[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    let total = truth.len();
    let weighted = |get: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| get(m) * m.support as f64)
            .sum::<f64>()
            / total.max(1) as f64
    };
    ClassificationReport {
        accuracy: ratio(tp.iter().sum(), total),
        weighted_avg: ClassMetrics {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
            support: total,
        },
        per_class,
    }
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>14} {:>10} {:>8} {:>9} {:>9}",
            "", "precision", "recall", "f1-score", "support"
        )?;
        for (c, m) in self.per_class.iter().enumerate() {
            writeln!(
                f,
                "{c:>14} {:>10.2} {:>8.2} {:>9.2} {:>9}",
                m.precision, m.recall, m.f1, m.support
            )?;
        }
        let w = &self.weighted_avg;
        writeln!(f)?;
        writeln!(
            f,
            "{:>14} {:>10} {:>8} {:>9.2} {:>9}",
            "accuracy", "", "", self.accuracy, w.support
        )?;
        write!(
            f,
            "{:>14} {:>10.2} {:>8.2} {:>9.2} {:>9}",
            "weighted avg", w.precision, w.recall, w.f1, w.support
        )
    }
}
