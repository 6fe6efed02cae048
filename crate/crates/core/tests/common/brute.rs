/// Sample-level recomputation: expands the matrix into (truth, prediction)
/// pairs and counts everything per sample.
pub struct Brute {
    pub acc: f64,
    pub sen: f64,
    pub f1: f64,
    pub kappa: f64,
}

pub fn brute(m: &[Vec<u64>]) -> Brute {
    let k = m.len();
    let mut pairs = Vec::new();
    for (t, row) in m.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            for _ in 0..c {
                pairs.push((t, p));
            }
        }
    }
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let mut sen = Vec::new();
    let mut f1 = Vec::new();
    let mut chance = 0.0;
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
        let fneg = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
        let truth = tp + fneg;
        let predicted = tp + fp;
        chance += (truth / n) * (predicted / n);
        if truth == 0.0 {
            continue;
        }
        let recall = tp / truth;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        sen.push(recall);
        f1.push(if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 });
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let acc = agree / n;
    Brute {
        acc,
        sen: mean(&sen),
        f1: mean(&f1),
        kappa: if chance >= 1.0 { 0.0 } else { (acc - chance) / (1.0 - chance) },
    }
}

/// Fraction of positive–negative pairs ranked correctly, ties counted half.
pub fn pairwise_auc(y: &[usize], s: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = y.iter().zip(s).filter(|(&l, _)| l == 1).map(|(_, &v)| v).collect();
    let neg: Vec<f64> = y.iter().zip(s).filter(|(&l, _)| l == 0).map(|(_, &v)| v).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut credit = 0.0;
    for p in &pos {
        for q in &neg {
            credit += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    Some(credit / (pos.len() * neg.len()) as f64)
}
