//! Statistics of how much each pyramid feature contributes to the fused
//! value, per designated network depth.
//!
//! The contribution of feature `f` for one image is the channel mean of
//! `|w_f · T[c, f]|`: the magnitude of its term before the fusion sum.
//! Hierarchical and parallel fusion use their effective per-feature weights
//! (`v_k · u_k[j]`, and the branch encoders respectively).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attention::pyramid_pool;
use crate::autograd::Graph;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::nn::Mode;
use crate::tensor::Tensor;

pub const STATS_HEADER: &str = "stage,feature_index,mean,std,q25,q50,q75,normalized_mean";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    /// `mean` divided by the sum of the means of all features of the stage.
    pub normalized_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    /// `low`, `mid` or `high`.
    pub stage: String,
    pub block: String,
    pub weights: Vec<f64>,
    /// `[sample][feature]` contributions.
    pub per_sample: Vec<Vec<f64>>,
    pub features: Vec<FeatureStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeightStats {
    pub stages: Vec<StageStats>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `[N][F]` contributions for a context `t: [N, C, F]` and weights `[F]` or
/// `[C, F]`.
pub fn contributions(t: &Tensor<f32>, weights: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
    let [n, c, f] = match t.shape() {
        &[n, c, f] => [n, c, f],
        s => return Err(Error::dim(format!("context must be [N, C, F], got {s:?}"))),
    };
    let per_channel = match weights.shape() {
        &[wf] if wf == f => false,
        &[wc, wf] if wc == c && wf == f => true,
        s => return Err(Error::dim(format!("weights {s:?} do not match context [{n}, {c}, {f}]"))),
    };
    let w = weights.data();
    Ok((0..n)
        .map(|b| {
            (0..f)
                .map(|j| {
                    (0..c)
                        .map(|ch| {
                            let wj = if per_channel { w[ch * f + j] } else { w[j] };
                            (wj as f64 * t.data()[(b * c + ch) * f + j] as f64).abs()
                        })
                        .sum::<f64>()
                        / c as f64
                })
                .collect()
        })
        .collect())
}

/// Per-feature summary of `[sample][feature]` values.
pub fn summarize(per_sample: &[Vec<f64>]) -> Vec<FeatureStats> {
    let f = per_sample.first().map_or(0, Vec::len);
    let n = per_sample.len() as f64;
    let mut out: Vec<FeatureStats> = (0..f)
        .map(|j| {
            let mut col: Vec<f64> = per_sample.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            col.sort_by(f64::total_cmp);
            FeatureStats {
                mean,
                std,
                q25: quantile(&col, 0.25),
                q50: quantile(&col, 0.5),
                q75: quantile(&col, 0.75),
                normalized_mean: 0.0,
            }
        })
        .collect();
    let total: f64 = out.iter().map(|s| s.mean).sum();
    for s in &mut out {
        s.normalized_mean = if total > 0.0 { s.mean / total } else { 0.0 };
    }
    out
}

/// Contribution statistics of the low/mid/high EPCA modules over `ds`,
/// evaluated in eval mode `batch` images at a time, in dataset order.
pub fn export_scale_weight_stats(model: &mut Network<f32>, ds: &Dataset, batch: usize) -> Result<ScaleWeightStats> {
    if model.epca_modules().is_empty() {
        return Err(Error::arg("model has no EPCA modules to export statistics from"));
    }
    let picks = model.stat_blocks();
    let mut modules = Vec::new();
    for (stage, block) in &picks {
        let m = model
            .epca_modules()
            .into_iter()
            .find(|(name, _)| name == block)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::arg(format!("block '{block}' ({stage}) carries no EPCA module")))?;
        modules.push(m);
    }
    let mut per_sample: Vec<Vec<Vec<f64>>> = vec![Vec::new(); picks.len()];
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(batch.max(1)) {
        let (x, _) = ds.batch(chunk);
        let g = Graph::new();
        let trace = model.trace(&g, g.constant(x), &mut Mode::Eval)?;
        for (i, (_, block)) in picks.iter().enumerate() {
            let input = trace
                .attention_inputs
                .iter()
                .find(|(n, _)| n == block)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::arg(format!("no attention input recorded at '{block}'")))?;
            let t = pyramid_pool(input, &modules[i].cfg.sizes)?.values.value();
            per_sample[i].extend(contributions(&t, &modules[i].effective_weights())?);
        }
    }
    let stages = picks
        .into_iter()
        .zip(modules)
        .zip(per_sample)
        .map(|(((stage, block), m), rows)| StageStats {
            stage: stage.to_string(),
            block,
            weights: m.effective_weights().data().iter().map(|&v| v as f64).collect(),
            features: summarize(&rows),
            per_sample: rows,
        })
        .collect();
    Ok(ScaleWeightStats { stages })
}

impl StageStats {
    /// Summary rows under [`STATS_HEADER`].
    pub fn stats_csv(&self) -> String {
        let mut out = format!("{STATS_HEADER}\n");
        for (j, s) in self.features.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{j},{},{},{},{},{},{}",
                self.stage, s.mean, s.std, s.q25, s.q50, s.q75, s.normalized_mean
            );
        }
        out
    }

    /// One row per sample, one column per feature (`f0..`).
    pub fn samples_csv(&self) -> String {
        let f = self.features.len();
        let header: Vec<String> = (0..f).map(|j| format!("f{j}")).collect();
        let mut out = format!("{}\n", header.join(","));
        for row in &self.per_sample {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

impl ScaleWeightStats {
    /// `weights.csv` with the raw effective weights of every stage.
    pub fn weights_csv(&self) -> String {
        let mut out = String::from("stage,block,feature_index,weight\n");
        for s in &self.stages {
            for (j, w) in s.weights.iter().enumerate() {
                let _ = writeln!(out, "{},{},{j},{w}", s.stage, s.block);
            }
        }
        out
    }

    /// Writes `stats_<stage>.csv`, `contrib_<stage>.csv` and `weights.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for s in &self.stages {
            for (prefix, body) in [("stats", s.stats_csv()), ("contrib", s.samples_csv())] {
                let path = dir.join(format!("{prefix}_{}.csv", s.stage));
                std::fs::write(&path, body)?;
                written.push(path);
            }
        }
        let path = dir.join("weights.csv");
        std::fs::write(&path, self.weights_csv())?;
        written.push(path);
        Ok(written)
    }
}
