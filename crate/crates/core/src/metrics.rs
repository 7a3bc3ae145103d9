//! Weighted F1, per-class precision/recall/F1 and the confusion matrix.
//!
//! Zero denominators yield 0 for precision, recall and F1. Weighted F1
//! averages per-class F1 by gold support.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no labels to score")]
    Empty,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelRange { label: usize, num_classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_names: Vec<String>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Confusion counts for `d` classes.
pub fn confusion_matrix(preds: &[usize], golds: &[usize], d: usize) -> Result<Vec<Vec<usize>>, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    let mut m = vec![vec![0; d]; d];
    for (&p, &g) in preds.iter().zip(golds) {
        for label in [p, g] {
            if label >= d {
                return Err(MetricsError::LabelRange { label, num_classes: d });
            }
        }
        m[g][p] += 1;
    }
    Ok(m)
}

impl MetricsReport {
    /// Build a report from a confusion matrix; lets evaluation merge counts
    /// from several workers before scoring.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self, MetricsError> {
        let d = confusion.len();
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        let per_class: Vec<ClassMetrics> = (0..d)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                ClassMetrics {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support,
                }
            })
            .collect();
        let weighted_f1 = per_class
            .iter()
            .map(|m| m.support as f64 * m.f1)
            .sum::<f64>()
            / total as f64;
        let correct: usize = (0..d).map(|c| confusion[c][c]).sum();
        Ok(Self {
            weighted_f1,
            accuracy: ratio(correct, total),
            per_class,
            confusion,
            total,
            label_names: Vec::new(),
        })
    }

    pub fn with_label_names(mut self, names: &[String]) -> Self {
        self.label_names = names.to_vec();
        self
    }

    pub fn macro_f1(&self) -> f64 {
        self.per_class.iter().map(|m| m.f1).sum::<f64>() / self.per_class.len() as f64
    }

    /// Micro F1; equal to accuracy for single-label classification.
    pub fn micro_f1(&self) -> f64 {
        self.accuracy
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Score predictions against gold labels over `d` classes.
pub fn weighted_f1(preds: &[usize], golds: &[usize], d: usize) -> Result<MetricsReport, MetricsError> {
    if golds.is_empty() && preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    MetricsReport::from_confusion(confusion_matrix(preds, golds, d)?)
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |c: usize| {
            self.label_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| c.to_string())
        };
        let width = (0..self.per_class.len())
            .map(|c| name(c).len())
            .max()
            .unwrap_or(0)
            .max(8);
        writeln!(
            f,
            "{:<width$} {:>9} {:>9} {:>9} {:>9}",
            "class", "precision", "recall", "f1", "support"
        )?;
        for (c, m) in self.per_class.iter().enumerate() {
            writeln!(
                f,
                "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                name(c),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:<width$} {:>9.4}", "accuracy", self.accuracy)?;
        writeln!(f, "{:<width$} {:>9.4}", "macro f1", self.macro_f1())?;
        writeln!(f, "{:<width$} {:>9.4} {:>29}", "weighted f1", self.weighted_f1, self.total)?;
        writeln!(f)?;
        writeln!(f, "confusion (rows = gold, cols = predicted)")?;
        for row in &self.confusion {
            for v in row {
                write!(f, "{v:>7}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
