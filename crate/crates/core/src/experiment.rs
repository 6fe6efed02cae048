//! Config-driven runs: dataset loading, model construction, training with
//! a test evaluation, and the ablation grids.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::attention::{AttentionSpec, ChannelDepKind, EpcaConfig, FusionVariant};
use crate::config::{DataSource, RunConfig};
use crate::data::synth::{self, SynthConfig};
use crate::data::{ingest, Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::network::checkpoint::{self, LoadFilter};
use crate::network::{ArchSpec, Network};
use crate::rng::seeded;
use crate::train::{self, EpochRecord, History};

/// Name of the config copy written next to training outputs.
pub const CONFIG_FILE: &str = "run.cfg";

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    SynthConfig { size: cfg.data.image_size, noise: cfg.data.synth_noise, ..SynthConfig::default() }
}

/// Test images are drawn from a seed stream disjoint from the training one.
pub fn synth_test_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_7e57_0000_0000
}

fn ingest_dir(cfg: &RunConfig, dir: &Path, labels: Option<&PathBuf>, split: Split) -> Result<Dataset> {
    let labels = labels.cloned().unwrap_or_else(|| dir.join("labels.csv"));
    let size = cfg.data.image_size;
    let mut ds = ingest(dir, &labels, (size, size), cfg.data.channels, &cfg.data.classes)?;
    ds.split = split;
    Ok(ds)
}

pub fn load_datasets(cfg: &RunConfig) -> Result<Datasets> {
    let d = &cfg.data;
    match d.source {
        DataSource::Synth => {
            if d.channels != 1 {
                return Err(Error::arg("the synthetic generator produces one channel"));
            }
            let sc = synth_config(cfg);
            let train = synth::generate(d.synth_train_per_class, &sc, d.synth_seed)?;
            let test = if d.synth_test_per_class > 0 {
                let mut t = synth::generate(d.synth_test_per_class, &sc, synth_test_seed(d.synth_seed))?;
                t.split = Split::Test;
                Some(t)
            } else {
                None
            };
            Ok(Datasets { train, test })
        }
        DataSource::Files => {
            let dir = d.train_dir.as_ref().ok_or_else(|| Error::arg("no train_dir configured"))?;
            let train = ingest_dir(cfg, dir, d.train_labels.as_ref(), Split::Train)?;
            let test = match &d.test_dir {
                Some(t) => Some(ingest_dir(cfg, t, d.test_labels.as_ref(), Split::Test)?),
                None => None,
            };
            Ok(Datasets { train, test })
        }
    }
}

pub fn arch_spec(cfg: &RunConfig, attention: &AttentionSpec, num_classes: usize) -> Result<ArchSpec> {
    let size = cfg.data.image_size;
    let k = cfg.arch.num_classes.unwrap_or(num_classes);
    ArchSpec::preset(&cfg.arch.preset, attention.clone(), k, (cfg.data.channels, size, size))
}

/// Builds the configured model, seeded by `seed`, with backbone tensors from
/// `[train] init` when set.
pub fn build_model(cfg: &RunConfig, attention: &AttentionSpec, num_classes: usize, seed: u64) -> Result<Network<f32>> {
    let spec = arch_spec(cfg, attention, num_classes)?;
    let mut model = Network::build(&spec, &mut seeded(seed))?;
    if let Some(init) = &cfg.run.init {
        checkpoint::load(&mut model, init, LoadFilter::Only(&Network::<f32>::is_backbone_tensor))?;
    }
    Ok(model)
}

/// Builds the configured model and restores every tensor from `ckpt`.
pub fn load_model(cfg: &RunConfig, ckpt: &Path) -> Result<Network<f32>> {
    let spec = arch_spec(cfg, &cfg.attention, default_classes(cfg))?;
    let mut model = Network::build(&spec, &mut seeded(0))?;
    checkpoint::load(&mut model, ckpt, LoadFilter::All)?;
    Ok(model)
}

/// Class count when `[arch] num_classes` is absent and no dataset is at
/// hand.
fn default_classes(cfg: &RunConfig) -> usize {
    match cfg.data.source {
        DataSource::Synth => synth::CLASS_NAMES.len(),
        DataSource::Files if !cfg.data.classes.is_empty() => cfg.data.classes.len(),
        DataSource::Files => 2,
    }
}

/// The config for a checkpoint: `explicit` when given, else the
/// [`CONFIG_FILE`] saved beside it.
pub fn config_for_checkpoint(ckpt: &Path, explicit: Option<&Path>) -> Result<RunConfig> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => ckpt.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE),
    };
    if !path.exists() {
        return Err(Error::arg(format!(
            "no config for {}: pass --config or keep {} beside the checkpoint",
            ckpt.display(),
            CONFIG_FILE
        )));
    }
    RunConfig::load(&path)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: History,
    /// On the test set, else on the held-out validation split, else on the
    /// training set itself.
    pub report: EvalReport,
    pub model: Network<f32>,
}

/// Trains one model and evaluates it. With `out_dir` the history,
/// checkpoints and a copy of the config are written there.
pub fn run(
    cfg: &RunConfig,
    attention: &AttentionSpec,
    seed: u64,
    data: &Datasets,
    out_dir: Option<&Path>,
) -> Result<RunOutcome> {
    run_with(cfg, attention, seed, data, out_dir, &mut |_| {})
}

pub fn run_with(
    cfg: &RunConfig,
    attention: &AttentionSpec,
    seed: u64,
    data: &Datasets,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<RunOutcome> {
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let mut model = build_model(cfg, attention, data.train.num_classes(), seed)?;
    let (train_set, eval_set) = match &data.test {
        Some(test) => (data.train.clone(), test.clone()),
        None if tc.val_fraction > 0.0 => data.train.split_train_val(1.0 - tc.val_fraction, seed),
        None => (data.train.clone(), data.train.clone()),
    };
    // the evaluation set never drives model selection; it is only logged
    // per epoch when there is a history file to log to
    tc.val_fraction = 0.0;
    let logged = out_dir.map(|_| &eval_set);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut saved = cfg.clone();
        saved.attention = attention.clone();
        saved.train.seed = seed;
        saved.arch.num_classes = Some(model.spec.num_classes);
        std::fs::write(dir.join(CONFIG_FILE), saved.to_string())?;
    }
    let history = train::train_with(&mut model, &train_set, logged, &tc, out_dir, on_epoch)?;
    let report = train::evaluate(&mut model, &eval_set, cfg.eval.batch_size)?;
    Ok(RunOutcome { history, report, model })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    /// Context features per channel, for pyramid-based entries.
    pub features: Option<usize>,
    pub attention_params: usize,
    pub acc: Vec<f64>,
    pub f1: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AblationRow {
    pub fn acc_mean(&self) -> f64 {
        mean_std(&self.acc).0
    }

    pub fn f1_mean(&self) -> f64 {
        mean_std(&self.f1).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub title: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_HEADER: &str = "entry,features,attention_params,acc_mean,acc_std,f1_mean,f1_std,seeds";

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Entry with the highest mean accuracy; ties keep the earlier one.
    pub fn best(&self) -> Option<&AblationRow> {
        self.rows.iter().fold(None, |best: Option<&AblationRow>, r| match best {
            Some(b) if b.acc_mean() >= r.acc_mean() => Some(b),
            _ => Some(r),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{ABLATION_HEADER}\n");
        for r in &self.rows {
            let (am, asd) = mean_std(&r.acc);
            let (fm, fsd) = mean_std(&r.f1);
            let features = r.features.map(|f| f.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "\"{}\",{features},{},{am},{asd},{fm},{fsd},{}",
                r.label,
                r.attention_params,
                r.acc.len()
            );
        }
        out
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({} seeds)", self.title, self.seeds.len())?;
        writeln!(f, "{:<22} {:>4} {:>8} {:>16} {:>16}", "entry", "F", "params", "ACC %", "F1 %")?;
        for r in &self.rows {
            let (am, asd) = mean_std(&r.acc);
            let (fm, fsd) = mean_std(&r.f1);
            let features = r.features.map(|f| f.to_string()).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<22} {:>4} {:>8} {:>9.2} ± {:<4.2} {:>9.2} ± {:<4.2}",
                r.label,
                features,
                r.attention_params,
                100.0 * am,
                100.0 * asd,
                100.0 * fm,
                100.0 * fsd
            )?;
        }
        Ok(())
    }
}

/// Parses `"1|1,2|1,3"` into grid-size sets.
pub fn parse_size_grid(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split('|').map(crate::attention::parse_sizes).collect()
}

/// One EPCA entry per size set, other settings from `base`.
pub fn size_grid(base: &EpcaConfig, grid: &[Vec<usize>]) -> Result<Vec<(String, AttentionSpec)>> {
    grid.iter()
        .map(|sizes| {
            let cfg = EpcaConfig { sizes: sizes.clone(), ..base.clone() };
            cfg.validate()?;
            let label = format!("{{{}}}", sizes.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
            Ok((label, AttentionSpec::Epca(cfg)))
        })
        .collect()
}

/// The four fusion variants followed by the channel-dependency heads on the
/// same pyramid.
pub fn fusion_grid(base: &EpcaConfig, reduction: usize) -> Vec<(String, AttentionSpec)> {
    let mut out: Vec<(String, AttentionSpec)> = FusionVariant::ALL
        .iter()
        .map(|&v| {
            let cfg = EpcaConfig { variant: v, per_channel_weights: false, ..base.clone() };
            (format!("{v}-epca"), AttentionSpec::Epca(cfg))
        })
        .collect();
    for kind in ChannelDepKind::ALL {
        out.push((
            format!("pp+{kind}"),
            AttentionSpec::ChannelDep { kind, sizes: base.sizes.clone(), reduction },
        ));
    }
    out
}

/// Trains every entry with every seed and collects test accuracy and F1.
/// `on_run` sees each finished run.
pub fn ablate(
    cfg: &RunConfig,
    title: &str,
    entries: &[(String, AttentionSpec)],
    data: &Datasets,
    on_run: &mut dyn FnMut(&str, u64, &EvalReport),
) -> Result<AblationReport> {
    if cfg.eval.seeds.is_empty() {
        return Err(Error::arg("ablation needs at least one seed"));
    }
    let mut rows = Vec::new();
    for (label, spec) in entries {
        let mut row = AblationRow {
            label: label.clone(),
            features: match spec {
                AttentionSpec::Epca(c) => Some(c.feature_count()),
                AttentionSpec::ChannelDep { sizes, .. } => Some(sizes.iter().map(|k| k * k).sum()),
                _ => None,
            },
            attention_params: 0,
            acc: Vec::new(),
            f1: Vec::new(),
        };
        for &seed in &cfg.eval.seeds {
            let outcome = run(cfg, spec, seed, data, None)?;
            row.attention_params = outcome.model.attention_param_count();
            on_run(label, seed, &outcome.report);
            row.acc.push(outcome.report.acc);
            row.f1.push(outcome.report.f1);
        }
        rows.push(row);
    }
    Ok(AblationReport { title: title.to_string(), seeds: cfg.eval.seeds.clone(), rows })
}
