//! Training: SGD with momentum, cosine warm restarts, flip/rotation
//! augmentation, and the two finetuning paradigms.

mod augment;
mod schedule;
mod sgd;

pub use augment::{hflip, rotate, AugmentConfig};
pub use schedule::Schedule;
pub use sgd::Sgd;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::autograd::Graph;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::network::{checkpoint, Network};
use crate::nn::{Mode, Module, ParamRole};
use crate::ops::softmax_cross_entropy;
use crate::rng::{seeded, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paradigm {
    /// Every parameter is trained.
    TraditionalFinetune,
    /// Backbone frozen; attention modules and the head are trained.
    PretrainFreeze,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::TraditionalFinetune => "finetune",
            Paradigm::PretrainFreeze => "freeze",
        })
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "finetune" | "traditional" | "traditional-finetune" => Ok(Paradigm::TraditionalFinetune),
            "freeze" | "pretrain-freeze" | "adapter" => Ok(Paradigm::PretrainFreeze),
            other => Err(Error::arg(format!("unknown paradigm '{other}' (finetune | freeze)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Decay normalization and fusion weights too.
    pub decay_all: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub t0: usize,
    pub t_mult: usize,
    pub eta_min: f64,
    pub paradigm: Paradigm,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Share of the training set held out for validation when no
    /// validation set is given; 0 disables validation.
    pub val_fraction: f64,
    /// Stop once the running training accuracy of an epoch reaches this.
    pub stop_at_train_acc: Option<f64>,
    /// Keep one checkpoint per epoch instead of only the latest.
    pub keep_checkpoints: bool,
    /// Re-estimate normalization statistics on un-augmented training
    /// images after the last epoch.
    pub recalibrate_norms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_max: 0.0015,
            momentum: 0.9,
            weight_decay: 1e-5,
            decay_all: false,
            batch_size: 32,
            epochs: 100,
            t0: 10,
            t_mult: 2,
            eta_min: 0.0,
            paradigm: Paradigm::TraditionalFinetune,
            augment: AugmentConfig::default(),
            seed: 0,
            val_fraction: 0.2,
            stop_at_train_acc: None,
            keep_checkpoints: false,
            recalibrate_norms: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min >= 0.0 && self.lr_max >= self.eta_min) {
            return Err(Error::arg(format!(
                "need lr_max >= eta_min >= 0, got lr_max {} eta_min {}",
                self.lr_max, self.eta_min
            )));
        }
        if self.t0 == 0 || self.t_mult == 0 {
            return Err(Error::arg("scheduler t0 and t_mult must be at least 1"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::arg("batch_size and epochs must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::arg("val_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr_max: self.lr_max,
            eta_min: self.eta_min,
            t0: self.t0 as f64,
            t_mult: self.t_mult as f64,
        }
    }
}

/// Marks parameters trainable according to the paradigm.
pub fn apply_paradigm<M: Module<f32> + ?Sized>(model: &mut M, paradigm: Paradigm) {
    model.visit_params_mut(&mut |p| {
        p.trainable = match paradigm {
            Paradigm::TraditionalFinetune => true,
            Paradigm::PretrainFreeze => p.role != ParamRole::Backbone,
        };
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Running accuracy of the training-mode forward passes.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub val_f1: Option<f64>,
    pub val_kappa: Option<f64>,
}

pub const HISTORY_HEADER: &str = "epoch,lr,train_loss,train_acc,val_acc,val_f1,val_kappa";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.train_acc,
            opt(self.val_acc),
            opt(self.val_f1),
            opt(self.val_kappa)
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Eval-mode report of `model` on `ds`; class probabilities serve as AUC
/// scores for binary tasks.
pub fn evaluate(model: &mut Network<f32>, ds: &Dataset, batch: usize) -> Result<metrics::EvalReport> {
    let (x, _) = ds.batch(&(0..ds.len()).collect::<Vec<_>>());
    let probs = model.predict(&x, batch)?;
    let k = ds.num_classes();
    let pred: Vec<usize> = probs
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect();
    let scores: Vec<f64> = probs.data().iter().map(|&v| v as f64).collect();
    metrics::evaluate(&ds.labels, &pred, k, Some(&scores))
}

pub fn train(
    model: &mut Network<f32>,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<History> {
    train_with(model, train_set, val_set, cfg, out_dir, &mut |_| {})
}

/// Trains `model`, calling `on_epoch` after every epoch. With `out_dir`,
/// `history.csv` and `last.epck` are rewritten every epoch.
pub fn train_with(
    model: &mut Network<f32>,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    let held_out;
    let (train_set, val_set) = match val_set {
        Some(v) => (train_set, Some(v)),
        None if cfg.val_fraction > 0.0 => {
            held_out = train_set.split_train_val(1.0 - cfg.val_fraction, cfg.seed);
            (&held_out.0, Some(&held_out.1))
        }
        None => (train_set, None),
    };
    if train_set.is_empty() {
        return Err(Error::Training("empty dataset: nothing to train on".into()));
    }
    let (c, h, w) = train_set.image_shape();
    if model.spec.input.0 != c {
        return Err(Error::dim(format!(
            "model expects {} input channels, dataset has {c}",
            model.spec.input.0
        )));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    apply_paradigm(model, cfg.paradigm);
    let schedule = cfg.schedule();
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);
    sgd.decay_all = cfg.decay_all;
    let mut rng = seeded(cfg.seed);
    let mut history = History::default();
    let image_len = train_set.image_len();

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch as f64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        // batch statistics of a single sample are degenerate
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            batches.pop();
        }
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for batch in batches {
            let (mut x, labels) = train_set.batch(batch);
            for img in x.data_mut().chunks_mut(image_len) {
                cfg.augment.apply(img, c, h, w, &mut rng);
            }
            let g = Graph::new();
            let logits = model.forward(&g, g.constant(x), &mut Mode::Train(&mut rng))?;
            let loss = softmax_cross_entropy(logits, &labels)?;
            let loss_value = loss.value().data()[0] as f64;
            if !loss_value.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            g.backward(loss)?;
            model.zero_grads();
            model.collect_grads(&g);
            sgd.step(model, lr)?;

            let k = model.spec.num_classes;
            let lv = logits.value();
            for (row, &y) in lv.data().chunks(k).zip(&labels) {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0;
                correct += (best == y) as usize;
            }
            loss_sum += loss_value * labels.len() as f64;
            seen += labels.len();
        }
        model.zero_grads();
        let train_acc = correct as f64 / seen as f64;
        let done = cfg.stop_at_train_acc.is_some_and(|t| train_acc >= t);
        if cfg.recalibrate_norms && (done || epoch + 1 == cfg.epochs) {
            recalibrate_norms(model, train_set, cfg.batch_size, &mut rng)?;
        }

        let val = match val_set {
            Some(v) if !v.is_empty() => Some(evaluate(model, v, cfg.batch_size.max(32))?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc,
            val_acc: val.as_ref().map(|r| r.acc),
            val_f1: val.as_ref().map(|r| r.f1),
            val_kappa: val.as_ref().map(|r| r.kappa),
        };
        on_epoch(&record);
        history.records.push(record);

        if let Some(dir) = out_dir {
            let mut file = fs::File::create(dir.join("history.csv"))?;
            file.write_all(history.to_csv().as_bytes())?;
            checkpoint::save(model, &dir.join("last.epck"))?;
            if cfg.keep_checkpoints {
                checkpoint::save(model, &dir.join(format!("epoch-{epoch:03}.epck")))?;
            }
        }
        if done {
            break;
        }
    }
    Ok(history)
}

/// Replaces the running statistics of every normalization layer that is
/// still training by their plain average over one pass of `ds`, without
/// augmentation. Rotation fills image corners with zeros, so statistics
/// gathered on augmented batches drift from what clean images produce.
pub fn recalibrate_norms(model: &mut Network<f32>, ds: &Dataset, batch: usize, rng: &mut SeededRng) -> Result<()> {
    let mut saved = Vec::new();
    model.visit_norms_mut(&mut |n| saved.push(n.momentum));
    let order: Vec<usize> = (0..ds.len()).collect();
    let batches = order.chunks(batch.max(2)).filter(|b| b.len() > 1);
    for (i, indices) in batches.enumerate() {
        let momentum = 1.0 / (i + 1) as f64;
        model.visit_norms_mut(&mut |n| n.momentum = momentum);
        let (x, _) = ds.batch(indices);
        let g = Graph::new();
        model.forward(&g, g.constant(x), &mut Mode::Train(rng))?;
    }
    let mut saved = saved.into_iter();
    model.visit_norms_mut(&mut |n| n.momentum = saved.next().unwrap_or(n.momentum));
    Ok(())
}
