use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[usize], predicted: &[usize], class_count: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![vec![0u64; class_count]; class_count];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= class_count || p >= class_count {
                return Err(Error::InvalidData(format!("label pair ({t}, {p}) outside [0, {class_count})")));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::DimensionMismatch("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count()).map(|c| self.counts[c][c]).sum()
    }

    /// `(tp, fp, fn, tn)` of class `c` against the rest.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[c][c];
        let row: u64 = self.counts[c].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[c]).sum();
        let (fp, fn_) = (col - tp, row - tp);
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }
}

/// Macro one-vs-rest metrics. `zero_division` names every per-class
/// quantity whose denominator vanished; those count as 0 in the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub npv: f64,
    pub f1: f64,
    pub auroc: Option<f64>,
    pub zero_division: Vec<String>,
}

impl Metrics {
    pub const NAMES: [&'static str; 7] = ["accuracy", "sensitivity", "specificity", "precision", "npv", "f1", "auroc"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "sensitivity" => Some(self.sensitivity),
            "specificity" => Some(self.specificity),
            "precision" => Some(self.precision),
            "npv" => Some(self.npv),
            "f1" => Some(self.f1),
            "auroc" => self.auroc,
            _ => None,
        }
    }
}

fn ratio(num: u64, den: u64, name: &str, class: usize, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(format!("{name}[{class}]"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `scores` (`m × C`) with `truth` enable AUROC; without them AUROC is
/// omitted.
pub fn metrics_from_confusion(cm: &ConfusionMatrix, scores: Option<(MatRef<'_, f64>, &[usize])>) -> Metrics {
    let c = cm.class_count();
    let mut flags = Vec::new();
    let (mut sens, mut spec, mut prec, mut npv, mut f1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..c {
        let (tp, fp, fn_, tn) = cm.one_vs_rest(k);
        let s = ratio(tp, tp + fn_, "sensitivity", k, &mut flags);
        let p = ratio(tp, tp + fp, "precision", k, &mut flags);
        sens += s;
        prec += p;
        spec += ratio(tn, tn + fp, "specificity", k, &mut flags);
        npv += ratio(tn, tn + fn_, "npv", k, &mut flags);
        f1 += ratio(2 * tp, 2 * tp + fp + fn_, "f1", k, &mut flags);
    }
    let cf = c as f64;
    let total = cm.total();
    let accuracy = if total == 0 {
        flags.push("accuracy".into());
        0.0
    } else {
        cm.trace() as f64 / total as f64
    };
    let auroc = match scores {
        Some((s, truth)) => macro_auroc(s, truth, c),
        None => {
            log::warn!("no soft scores; AUROC omitted");
            None
        }
    };
    Metrics {
        accuracy,
        sensitivity: sens / cf,
        specificity: spec / cf,
        precision: prec / cf,
        npv: npv / cf,
        f1: f1 / cf,
        auroc,
        zero_division: flags,
    }
}

/// Mann–Whitney AUROC of `score` for `positive` samples, ties counted half.
pub fn binary_auroc(score: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&t| positive[order[t]]).count() as f64 * mid;
        i = j + 1;
    }
    let np = positive.iter().filter(|&&p| p).count() as f64;
    let nn = positive.len() as f64 - np;
    if np == 0.0 || nn == 0.0 {
        return None;
    }
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Mean one-vs-rest AUROC over classes present with both roles.
pub fn macro_auroc(scores: MatRef<'_, f64>, truth: &[usize], class_count: usize) -> Option<f64> {
    if scores.nrows() != truth.len() || scores.ncols() != class_count {
        log::warn!("score matrix shape does not match labels; AUROC omitted");
        return None;
    }
    let per_class: Vec<f64> = (0..class_count)
        .filter_map(|c| {
            let col: Vec<f64> = (0..scores.nrows()).map(|i| scores[(i, c)]).collect();
            let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            binary_auroc(&col, &pos)
        })
        .collect();
    if per_class.is_empty() {
        None
    } else {
        Some(per_class.iter().sum::<f64>() / per_class.len() as f64)
    }
}
