//! Accuracy, macro-F1 and confusion matrices, per fold and pooled.

use crate::error::{shape_err, DsidError, Result};
use crate::matrix::Matrix;

/// Argmax per row; ties go to the lowest class index.
pub fn predict_labels(logits: &Matrix) -> Vec<usize> {
    logits
        .iter_rows()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate().skip(1) {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(shape_err("confusion matrix classes", self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// `2·TP / (2·TP + FP + FN)`, or 0 when the denominator is 0.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.get(class, class);
        let fp = self.col_sum(class) - tp;
        let fn_ = self.row_sum(class) - tp;
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    pub fn macro_f1(&self) -> f64 {
        if self.classes == 0 {
            return 0.0;
        }
        (0..self.classes).map(|c| self.f1(c)).sum::<f64>() / self.classes as f64
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks_exact(self.classes.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

pub fn score(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Score> {
    if predictions.len() != labels.len() {
        return Err(shape_err("score inputs", labels.len(), predictions.len()));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &t) in predictions.iter().zip(labels) {
        for v in [p, t] {
            if v >= classes {
                return Err(DsidError::LabelOutOfRange { label: v, classes });
            }
        }
        cm.record(t, p);
    }
    Ok(Score {
        accuracy: cm.accuracy(),
        macro_f1: cm.macro_f1(),
        confusion: cm,
    })
}

/// Predictions and ground truth for one task on one held-out fold.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub score: Score,
}

impl TaskOutcome {
    pub fn new(predictions: Vec<usize>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let score = score(&predictions, &labels, classes)?;
        Ok(Self {
            predictions,
            labels,
            score,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledScore {
    /// All held-out predictions concatenated, then scored once.
    pub micro: Score,
    /// Unweighted mean of per-fold accuracy.
    pub fold_mean_accuracy: f64,
    /// Unweighted mean of per-fold macro-F1.
    pub fold_mean_macro_f1: f64,
    pub folds: usize,
}

pub fn pool_folds<'a>(
    folds: impl IntoIterator<Item = &'a TaskOutcome>,
    classes: usize,
) -> Result<PooledScore> {
    let mut cm = ConfusionMatrix::new(classes);
    let mut acc_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut count = 0usize;
    for f in folds {
        cm.add(&f.score.confusion)?;
        acc_sum += f.score.accuracy;
        f1_sum += f.score.macro_f1;
        count += 1;
    }
    if count == 0 {
        return Err(DsidError::InvalidConfig("pooling needs at least one fold".into()));
    }
    Ok(PooledScore {
        micro: Score {
            accuracy: cm.accuracy(),
            macro_f1: cm.macro_f1(),
            confusion: cm,
        },
        fold_mean_accuracy: acc_sum / count as f64,
        fold_mean_macro_f1: f1_sum / count as f64,
        folds: count,
    })
}
