//! Classification metrics: accuracy, confusion matrix, and macro-averaged
//! precision/recall.
//!
//! Conventions, fixed so results are comparable across runs:
//! - confusion rows are the true class, columns the predicted class;
//! - per-class precision/recall with a zero denominator is 0;
//! - "macro" averages are unweighted means over all classes.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("metrics over an empty sample set")]
    Empty,
}

/// Row = true class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

/// Builds the confusion matrix of `pred` against `truth` over `classes`
/// classes.
pub fn confusion(pred: &[u8], truth: &[u8], classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut counts = Array2::<u64>::zeros((classes, classes));
    for (&p, &t) in pred.iter().zip(truth) {
        for &label in [p, t].iter() {
            if usize::from(label) >= classes {
                return Err(MetricsError::LabelOutOfRange { label, classes });
            }
        }
        counts[[usize::from(t), usize::from(p)]] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Per-class and macro-averaged precision and recall.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionRecall {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[[c, c]]).sum()
    }

    /// Each row divided by its sum; rows with no samples stay all-zero.
    pub fn normalized(&self) -> Array2<f64> {
        let c = self.classes();
        let mut out = Array2::<f64>::zeros((c, c));
        for t in 0..c {
            let row_sum: u64 = self.counts.row(t).sum();
            if row_sum > 0 {
                for p in 0..c {
                    out[[t, p]] = self.counts[[t, p]] as f64 / row_sum as f64;
                }
            }
        }
        out
    }

    /// precision_c = counts[c][c] / column c sum, recall_c = counts[c][c] /
    /// row c sum, with 0 for empty denominators; macro values are unweighted
    /// means.
    pub fn precision_recall(&self) -> PrecisionRecall {
        let c = self.classes();
        let mut precision = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        for k in 0..c {
            let diag = self.counts[[k, k]] as f64;
            let col: u64 = self.counts.column(k).sum();
            let row: u64 = self.counts.row(k).sum();
            precision.push(if col > 0 { diag / col as f64 } else { 0.0 });
            recall.push(if row > 0 { diag / row as f64 } else { 0.0 });
        }
        let macro_precision = precision.iter().sum::<f64>() / c as f64;
        let macro_recall = recall.iter().sum::<f64>() / c as f64;
        PrecisionRecall {
            precision,
            recall,
            macro_precision,
            macro_recall,
        }
    }

    /// trace / total.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    /// CSV of the raw counts, one row per true class.
    pub fn counts_csv(&self) -> String {
        let mut out = String::new();
        for t in 0..self.classes() {
            let row: Vec<String> = (0..self.classes())
                .map(|p| self.counts[[t, p]].to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// CSV of the row-normalized matrix.
    pub fn normalized_csv(&self) -> String {
        let norm = self.normalized();
        let mut out = String::new();
        for t in 0..self.classes() {
            let row: Vec<String> = (0..self.classes())
                .map(|p| format!("{}", norm[[t, p]]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Fraction of exact matches between `pred` and `truth`.
pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}
