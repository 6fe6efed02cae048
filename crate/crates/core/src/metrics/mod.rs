//! Classification measures: accuracy, macro sensitivity and F1, Cohen's
//! kappa, and binary ROC AUC.
//!
//! Sensitivity and F1 are macro averages over the classes that occur in the
//! ground truth; a class with no true samples has no recall and is left out
//! of both averages.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[t][p]`: samples of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<u64>>,
    pub acc: f64,
    pub sen: f64,
    pub f1: f64,
    pub kappa: f64,
    pub auc: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim(format!(
            "{} labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::arg(format!("label {} out of range for {k} classes", t.max(p))));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Summary measures of a confusion matrix.
pub fn from_confusion(confusion: Vec<Vec<u64>>) -> EvalReport {
    let k = confusion.len();
    let total: u64 = confusion.iter().flatten().sum();
    let n = total as f64;
    let diag: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let rows: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();

    let acc = if total == 0 { 0.0 } else { diag as f64 / n };
    let present: Vec<usize> = (0..k).filter(|&c| rows[c] > 0).collect();
    let mut sen = 0.0;
    let mut f1 = 0.0;
    for &c in &present {
        let tp = confusion[c][c] as f64;
        sen += tp / rows[c] as f64;
        f1 += 2.0 * tp / (rows[c] + cols[c]) as f64;
    }
    if !present.is_empty() {
        sen /= present.len() as f64;
        f1 /= present.len() as f64;
    }
    let kappa = if total == 0 {
        0.0
    } else {
        let p_e: f64 = rows.iter().zip(&cols).map(|(&r, &c)| r as f64 * c as f64).sum::<f64>() / (n * n);
        if p_e >= 1.0 {
            // a single class in both truth and predictions: agreement is
            // entirely expected by chance
            0.0
        } else {
            (acc - p_e) / (1.0 - p_e)
        }
    };
    let mut warnings = Vec::new();
    if present.len() < k {
        warnings.push(format!(
            "{} class(es) absent from the ground truth; excluded from macro Sen/F1",
            k - present.len()
        ));
    }
    EvalReport { confusion, acc, sen, f1, kappa, auc: None, warnings }
}

/// Area under the ROC curve for binary labels (1 = positive), as the
/// Mann–Whitney statistic with half credit for tied scores. `None` when a
/// class is missing.
pub fn binary_auc(y_true: &[usize], scores: &[f64]) -> Option<f64> {
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || scores.iter().any(|s| s.is_nan()) {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives, with tied groups sharing their
    // average rank; doubling keeps every quantity an integer
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg_rank = (i + 1 + j + 1) as u64;
        let positives = order[i..=j].iter().filter(|&&o| y_true[o] == 1).count() as u64;
        twice_rank_sum += positives * twice_avg_rank;
        i = j + 1;
    }
    let np = n_pos as u64;
    let twice_u = twice_rank_sum - np * (np + 1);
    Some(twice_u as f64 / 2.0 / (n_pos * n_neg) as f64)
}

/// Evaluates predictions against labels for `k` classes.
///
/// `scores` are optional: `N` positive-class scores, or an `N × K` score
/// matrix whose column 1 is used when `K = 2`. AUC is reported only for
/// binary tasks.
pub fn evaluate(
    y_true: &[usize],
    y_pred: &[usize],
    k: usize,
    scores: Option<&[f64]>,
) -> Result<EvalReport> {
    let mut report = from_confusion(confusion_matrix(y_true, y_pred, k)?);
    if let Some(scores) = scores {
        let n = y_true.len();
        let positive: Option<Vec<f64>> = if k != 2 {
            report.warnings.push(format!("AUC is defined for binary tasks only; omitted for {k} classes"));
            None
        } else if scores.len() == n {
            Some(scores.to_vec())
        } else if scores.len() == 2 * n {
            Some(scores.chunks(2).map(|r| r[1]).collect())
        } else {
            return Err(Error::dim(format!("{} scores for {n} samples", scores.len())));
        };
        if let Some(pos) = positive {
            report.auc = binary_auc(y_true, &pos);
            if report.auc.is_none() {
                report.warnings.push("AUC undefined: one class has no samples".into());
            }
        }
    }
    Ok(report)
}

impl EvalReport {
    /// `metric,value` rows followed by the confusion matrix.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in [("acc", self.acc), ("sen_macro", self.sen), ("f1_macro", self.f1), ("kappa", self.kappa)] {
            out.push_str(&format!("{name},{v}\n"));
        }
        if let Some(auc) = self.auc {
            out.push_str(&format!("auc,{auc}\n"));
        }
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, c) in row.iter().enumerate() {
                out.push_str(&format!("confusion_{t}_{p},{c}\n"));
            }
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ACC    {:.4}", self.acc)?;
        writeln!(f, "Sen    {:.4}  (macro)", self.sen)?;
        writeln!(f, "F1     {:.4}  (macro)", self.f1)?;
        writeln!(f, "kappa  {:.4}", self.kappa)?;
        match self.auc {
            Some(a) => writeln!(f, "AUC    {a:.4}")?,
            None => writeln!(f, "AUC    n/a")?,
        }
        writeln!(f, "confusion (rows true, columns predicted):")?;
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
            writeln!(f, "{}", cells.join(""))?;
        }
        for w in &self.warnings {
            writeln!(f, "note: {w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_hand_case() {
        let r = from_confusion(vec![vec![40, 10], vec![5, 45]]);
        assert!((r.acc - 0.85).abs() < 1e-15);
        assert!((r.sen - 0.85).abs() < 1e-15);
        let p_e: f64 = (50.0 * 45.0 + 50.0 * 55.0) / 10000.0;
        assert!((p_e - 0.5).abs() < 1e-15);
        assert!((r.kappa - 0.7).abs() < 1e-12, "{}", r.kappa);
    }

    #[test]
    fn auc_degenerate_cases() {
        let y = [0, 0, 1, 1];
        assert_eq!(binary_auc(&y, &[0.1, 0.2, 0.3, 0.9]), Some(1.0));
        assert_eq!(binary_auc(&y, &[0.5; 4]), Some(0.5));
        assert_eq!(binary_auc(&[1, 1], &[0.1, 0.2]), None);
    }
}
