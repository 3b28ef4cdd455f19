use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts laid out as `[[tn, fp], [fn, tp]]`.
pub type Confusion = [[usize; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Pooled over instances; for single-label binary output this is
    /// exactly the accuracy.
    pub micro_f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Absent when the evaluated labels hold a single class.
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

impl MetricReport {
    pub const NAMES: [&'static str; 7] = [
        "accuracy",
        "precision",
        "recall",
        "micro_f1",
        "sensitivity",
        "specificity",
        "auc",
    ];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "micro_f1" => Some(self.micro_f1),
            "sensitivity" => Some(self.sensitivity),
            "specificity" => Some(self.specificity),
            "auc" => self.auc,
            _ => None,
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_inputs(y_true: &[u8], y_prob: &[f64]) -> Result<()> {
    if y_true.is_empty() {
        return Err(Error::InvalidData("no predictions to evaluate".into()));
    }
    if y_true.len() != y_prob.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels but {} scores",
            y_true.len(),
            y_prob.len()
        )));
    }
    if let Some(&l) = y_true.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidData(format!("label {l} is not binary")));
    }
    if let Some(p) = y_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidData(format!("score {p} outside [0, 1]")));
    }
    Ok(())
}

/// Thresholds `y_prob` (`p >= threshold` is a case) and scores the result.
pub fn compute_metrics(y_true: &[u8], y_prob: &[f64], threshold: f64) -> Result<MetricReport> {
    check_inputs(y_true, y_prob)?;
    let mut c: Confusion = [[0; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_prob) {
        c[t as usize][(p >= threshold) as usize] += 1;
    }
    let [[tn, fp], [fn_, tp]] = c;
    let n = y_true.len();
    let accuracy = ratio(tp + tn, n);
    let recall = ratio(tp, tp + fn_);
    let auc = if tp + fn_ > 0 && tn + fp > 0 {
        Some(roc_auc(y_true, y_prob)?.auc)
    } else {
        None
    };
    Ok(MetricReport {
        accuracy,
        precision: ratio(tp, tp + fp),
        recall,
        micro_f1: accuracy,
        sensitivity: recall,
        specificity: ratio(tn, tn + fp),
        auc,
        confusion: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending unique scores; point `k + 1` classifies `score >= thresholds[k]` as case.
    pub thresholds: Vec<f64>,
    /// `(fpr, tpr)` starting at `(0, 0)` and ending at `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Rank-statistic AUC with midranks for ties, plus the threshold sweep.
pub fn roc_auc(y_true: &[u8], y_prob: &[f64]) -> Result<RocCurve> {
    check_inputs(y_true, y_prob)?;
    let n_pos = y_true.iter().filter(|&&l| l == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..y_true.len()).collect();
    order.sort_by(|&a, &b| y_prob[a].total_cmp(&y_prob[b]));

    // Ascending pass for midranks.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && y_prob[order[j + 1]] == y_prob[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| y_true[k] == 1).count();
        pos_rank_sum += midrank * pos_in_tie as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let auc = (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    // Descending pass for the curve.
    let mut thresholds = Vec::new();
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let score = y_prob[order[k - 1]];
        while k > 0 && y_prob[order[k - 1]] == score {
            if y_true[order[k - 1]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        thresholds.push(score);
        points.push((fp as f64 / nn, tp as f64 / np));
    }
    Ok(RocCurve {
        thresholds,
        points,
        auc: auc.clamp(0.0, 1.0),
    })
}
