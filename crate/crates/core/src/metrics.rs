//! Binary classification metrics derived from a confusion matrix.
//!
//! Include is the positive class. A metric whose denominator is zero is reported as
//! `None` ("undefined") rather than silently coerced to zero; the one exception is
//! F-beta with precision and recall both zero, which is 0 by convention.

use serde::{Deserialize, Serialize};

use crate::label::ScreeningLabel;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot build a confusion matrix from zero pairs")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn support(&self, label: ScreeningLabel) -> u64 {
        match label {
            ScreeningLabel::Include => self.tp + self.fn_,
            ScreeningLabel::Exclude => self.tn + self.fp,
        }
    }

    pub fn record(&mut self, human: ScreeningLabel, predicted: ScreeningLabel) {
        use ScreeningLabel::*;
        match (human, predicted) {
            (Include, Include) => self.tp += 1,
            (Exclude, Exclude) => self.tn += 1,
            (Exclude, Include) => self.fp += 1,
            (Include, Exclude) => self.fn_ += 1,
        }
    }

    /// Relabels the positive class: tp<->tn, fp<->fn.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    /// Expands the counts into `(human, predicted)` pairs, grouped TP, TN, FP, FN.
    pub fn to_pairs(&self) -> Vec<(ScreeningLabel, ScreeningLabel)> {
        use ScreeningLabel::*;
        let mut out = Vec::with_capacity(self.total() as usize);
        for (count, pair) in [
            (self.tp, (Include, Include)),
            (self.tn, (Exclude, Exclude)),
            (self.fp, (Exclude, Include)),
            (self.fn_, (Include, Exclude)),
        ] {
            out.extend(std::iter::repeat_n(pair, count as usize));
        }
        out
    }
}

pub fn build_confusion<I>(pairs: I) -> Result<ConfusionMatrix, MetricsError>
where
    I: IntoIterator<Item = (ScreeningLabel, ScreeningLabel)>,
{
    let mut cm = ConfusionMatrix::default();
    for (human, predicted) in pairs {
        cm.record(human, predicted);
    }
    if cm.total() == 0 {
        Err(MetricsError::Empty)
    } else {
        Ok(cm)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `(1+β²)·P·R / (β²·P + R)`, zero when both P and R are zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ScreeningLabel,
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub beta: f64,
    pub f_beta: Option<f64>,
}

impl ClassMetrics {
    fn from_counts(label: ScreeningLabel, hit: u64, false_pos: u64, false_neg: u64, beta: f64) -> Self {
        let precision = ratio(hit, hit + false_pos);
        let recall = ratio(hit, hit + false_neg);
        let f = |b: f64| match (precision, recall) {
            (Some(p), Some(r)) => Some(f_beta(p, r, b)),
            _ => None,
        };
        Self {
            label,
            support: hit + false_neg,
            precision,
            recall,
            f1: f(1.0),
            beta,
            f_beta: f(beta),
        }
    }

    pub fn is_defined(&self) -> bool {
        self.precision.is_some() && self.recall.is_some()
    }
}

/// Metrics for `[Exclude, Include]`.
pub fn per_class_metrics(cm: &ConfusionMatrix, beta: f64) -> [ClassMetrics; 2] {
    [
        ClassMetrics::from_counts(ScreeningLabel::Exclude, cm.tn, cm.fn_, cm.fp, beta),
        ClassMetrics::from_counts(ScreeningLabel::Include, cm.tp, cm.fp, cm.fn_, beta),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub macro_f2: Option<f64>,
    pub weighted_f1: Option<f64>,
    pub weighted_f2: Option<f64>,
}

fn macro_mean(values: [Option<f64>; 2]) -> Option<f64> {
    Some((values[0]? + values[1]?) / 2.0)
}

fn weighted_mean(values: [Option<f64>; 2], supports: [u64; 2]) -> Option<f64> {
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return None;
    }
    let mut acc = 0.0;
    for (v, s) in values.into_iter().zip(supports) {
        if s > 0 {
            acc += v? * s as f64;
        }
    }
    Some(acc / total as f64)
}

pub fn aggregate(cm: &ConfusionMatrix) -> AggregateMetrics {
    let f1 = per_class_metrics(cm, 1.0);
    let f2 = per_class_metrics(cm, 2.0);
    let supports = [f1[0].support, f1[1].support];
    let f1s = [f1[0].f1, f1[1].f1];
    let f2s = [f2[0].f_beta, f2[1].f_beta];
    AggregateMetrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        balanced_accuracy: macro_mean([f1[0].recall, f1[1].recall]),
        macro_f1: macro_mean(f1s),
        macro_f2: macro_mean(f2s),
        weighted_f1: weighted_mean(f1s, supports),
        weighted_f2: weighted_mean(f2s, supports),
    }
}

/// Confusion matrix as percentages of each true class: `[pred 0, pred 1]` per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowNormalized {
    pub true_exclude: Option<[f64; 2]>,
    pub true_include: Option<[f64; 2]>,
}

pub fn row_normalize(cm: &ConfusionMatrix) -> RowNormalized {
    let row = |pred0: u64, pred1: u64| {
        let n = pred0 + pred1;
        (n > 0).then(|| [100.0 * pred0 as f64 / n as f64, 100.0 * pred1 as f64 / n as f64])
    };
    RowNormalized {
        true_exclude: row(cm.tn, cm.fp),
        true_include: row(cm.fn_, cm.tp),
    }
}

/// Round half away from zero at `decimals` places.
pub fn round_half_away(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// Fraction rendered as a two-decimal percentage, or `undefined`.
pub fn format_percent(fraction: Option<f64>) -> String {
    match fraction {
        Some(f) => format!("{:.2}", round_half_away(100.0 * f, 2)),
        None => "undefined".to_string(),
    }
}
