use serde::Serialize;

use crate::error::{Error, Result};

/// Rows are actual classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("no samples to evaluate".into()));
        }
        let mut counts = vec![vec![0; num_classes]; num_classes];
        for (&p, &l) in predictions.iter().zip(labels) {
            if p >= num_classes || l >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "class index out of range (prediction {p}, label {l}, {num_classes} classes)"
                )));
            }
            counts[l][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub confusion_matrix: Vec<Vec<usize>>,
    pub total: usize,
    /// Zero-denominator cases reported as 0, and similar caveats.
    pub flags: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_and_report(predictions: &[usize], labels: &[usize], class_names: &[String]) -> Result<MetricsReport> {
    let k = class_names.len();
    let cm = ConfusionMatrix::new(predictions, labels, k)?;
    let mut flags = Vec::new();
    let mut per_class = Vec::with_capacity(k);
    for (c, name) in class_names.iter().enumerate() {
        let tp = cm.counts[c][c];
        let predicted: usize = (0..k).map(|r| cm.counts[r][c]).sum();
        let support: usize = cm.counts[c].iter().sum();
        let precision = ratio(tp, predicted).unwrap_or_else(|| {
            flags.push(format!("precision of `{name}` undefined (never predicted); reported as 0"));
            0.0
        });
        let recall = ratio(tp, support).unwrap_or_else(|| {
            flags.push(format!("recall of `{name}` undefined (no support); reported as 0"));
            0.0
        });
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            flags.push(format!("f1 of `{name}` undefined (precision + recall = 0); reported as 0"));
            0.0
        };
        per_class.push(ClassMetrics {
            class: name.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let kf = k as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / kf,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / kf,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / kf,
    };
    let total = cm.total();
    let w = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64;
    let weighted_avg = Averages {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    };
    Ok(MetricsReport {
        overall_accuracy: cm.accuracy(),
        per_class,
        macro_avg,
        weighted_avg,
        total,
        confusion_matrix: cm.counts,
        flags,
    })
}

impl MetricsReport {
    /// Aligned text with one row per class, then averages and accuracy.
    pub fn to_table(&self) -> String {
        let width = self.per_class.iter().map(|m| m.class.len()).max().unwrap_or(5).max(12);
        let mut out = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}\n",
            "class", "precision", "recall", "f1-score", "support"
        );
        for m in &self.per_class {
            out += &format!(
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}\n",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            out += &format!(
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}\n",
                name, a.precision, a.recall, a.f1, self.total
            );
        }
        out += &format!("{:<width$}  {:>9.4}  {:>9}  {:>9}  {:>7}\n", "accuracy", self.overall_accuracy, "", "", self.total);
        out
    }
}
