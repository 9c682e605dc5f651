//! Confusion counts and micro/macro classification metrics over
//! (instance, label) pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// One evaluated instance, as written to prediction files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub admission_id: u64,
    pub predicted: Vec<u8>,
    pub gold: Vec<u8>,
    pub probabilities: Vec<f64>,
}

/// `num / den` with the convention `0 / 0 = 0`.
pub fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl ConfusionCounts {
    pub fn add_pair(&mut self, pred: u8, gold: u8) {
        match (pred != 0, gold != 0) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    /// Harmonic mean of precision and recall, i.e. `2TP / (2TP + FP + FN)`.
    pub fn f1(&self) -> f64 {
        ratio(2.0 * self.tp as f64, (2 * self.tp + self.fp + self.fn_) as f64)
    }

    /// Predicted-positive rate over all counted pairs.
    pub fn parity(&self) -> f64 {
        ratio((self.tp + self.fp) as f64, self.total() as f64)
    }
}

fn check_shapes(pred: &[Vec<u8>], gold: &[Vec<u8>]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predicted rows but {} gold rows",
            pred.len(),
            gold.len()
        )));
    }
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Shape(format!(
                "row {i}: {} predicted labels but {} gold labels",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

/// Pooled counts over every cell of two equally shaped binary matrices.
pub fn confusion(pred: &[Vec<u8>], gold: &[Vec<u8>]) -> Result<ConfusionCounts> {
    check_shapes(pred, gold)?;
    let mut counts = ConfusionCounts::default();
    for (p, g) in pred.iter().zip(gold) {
        for (&a, &b) in p.iter().zip(g) {
            counts.add_pair(a, b);
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// Unweighted mean of per-label F1.
    pub macro_f1: f64,
    pub parity: f64,
    pub counts: ConfusionCounts,
}

pub fn metrics(pred: &[Vec<u8>], gold: &[Vec<u8>]) -> Result<Metrics> {
    let counts = confusion(pred, gold)?;
    let labels = gold.first().map_or(0, Vec::len);
    let mut per_label = vec![ConfusionCounts::default(); labels];
    for (p, g) in pred.iter().zip(gold) {
        if p.len() != labels {
            return Err(Error::Shape("ragged label matrix".into()));
        }
        for (l, (&a, &b)) in p.iter().zip(g).enumerate() {
            per_label[l].add_pair(a, b);
        }
    }
    let macro_f1 = ratio(per_label.iter().map(ConfusionCounts::f1).sum(), labels as f64);
    Ok(Metrics {
        micro_precision: counts.precision(),
        micro_recall: counts.recall(),
        micro_f1: counts.f1(),
        macro_f1,
        parity: counts.parity(),
        counts,
    })
}

/// Thresholds tried by [`tune_threshold`]: 0.1, 0.2, ..., 0.9.
pub fn threshold_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

pub fn threshold_predictions(probabilities: &[Vec<f64>], threshold: f64) -> Vec<Vec<u8>> {
    probabilities
        .iter()
        .map(|p| crate::model::predict(p, threshold))
        .collect()
}

/// Threshold from `grid` with the highest micro-F1; ties go to the candidate
/// closest to 0.5, then to the smaller one.
pub fn tune_threshold(probabilities: &[Vec<f64>], gold: &[Vec<u8>], grid: &[f64]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &t in grid {
        let f1 = confusion(&threshold_predictions(probabilities, t), gold)?.f1();
        best = match best {
            None => Some((t, f1)),
            Some((bt, bf)) => {
                let closer = (t - 0.5).abs() < (bt - 0.5).abs();
                if f1 > bf || (f1 == bf && closer) {
                    Some((t, f1))
                } else {
                    Some((bt, bf))
                }
            }
        };
    }
    best.ok_or_else(|| Error::InvalidArgument("empty threshold grid".into()))
}
