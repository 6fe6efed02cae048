//! Run configuration files.
//!
//! A config is plain text with `[section]` headers and `key = value` lines.
//! `#` and `;` start comments. Unknown sections and keys are rejected with
//! their line number. Relative paths are taken relative to the file.
//!
//! ```text
//! [data]
//! source = synth
//! image_size = 32
//!
//! [attention]
//! kind = epca
//! sizes = 1,3
//!
//! [train]
//! epochs = 10
//! ```

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::attention::{parse_sizes, AttentionSpec, ChannelDepKind, EpcaConfig, DEFAULT_REDUCTION};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated on the fly by [`crate::data::synth`].
    Synth,
    /// Images listed in labels CSVs.
    Files,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_dir: Option<PathBuf>,
    /// Defaults to `labels.csv` inside the directory.
    pub train_labels: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Empty means classes are numbered by label.
    pub classes: Vec<String>,
    pub image_size: usize,
    pub channels: usize,
    pub synth_train_per_class: usize,
    pub synth_test_per_class: usize,
    pub synth_seed: u64,
    pub synth_noise: f32,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synth,
            train_dir: None,
            train_labels: None,
            test_dir: None,
            test_labels: None,
            classes: Vec::new(),
            image_size: 64,
            channels: 1,
            synth_train_per_class: 200,
            synth_test_per_class: 100,
            synth_seed: 7,
            synth_noise: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub preset: String,
    /// Taken from the dataset when absent.
    pub num_classes: Option<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig { preset: "mini-resnet20".into(), num_classes: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Where history and checkpoints go.
    pub out_dir: PathBuf,
    /// Checkpoint whose backbone tensors initialize the model.
    pub init: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { out_dir: PathBuf::from("runs"), init: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub batch_size: usize,
    /// Seeds every ablation entry is trained with.
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { batch_size: 64, seeds: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub layer: Option<String>,
    pub class: usize,
    pub batch_size: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { layer: None, class: 0, batch_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub arch: ArchConfig,
    pub attention: AttentionSpec,
    pub train: TrainConfig,
    pub run: RunOptions,
    pub eval: EvalConfig,
    pub explain: ExplainConfig,
}

const SECTIONS: [&str; 6] = ["data", "arch", "attention", "train", "eval", "explain"];

fn parse_value<V: FromStr>(line: usize, key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config {
        line,
        message: format!("bad value '{value}' for '{key}'"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config { line, message: format!("'{key}' expects true or false, got '{value}'") }),
    }
}

fn parse_list<V: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(line, key, s))
        .collect()
}

/// Attention settings are collected first and turned into a spec at the end,
/// since `kind` may come after the keys it governs.
#[derive(Default)]
struct AttentionKeys {
    kind: Option<(usize, String)>,
    epca: EpcaConfig,
    reduction: Option<usize>,
}

impl AttentionKeys {
    fn finish(self) -> Result<AttentionSpec> {
        let Some((line, kind)) = self.kind else {
            return Ok(AttentionSpec::None);
        };
        let reduction = self.reduction.unwrap_or(DEFAULT_REDUCTION);
        let spec = match kind.as_str() {
            "none" => AttentionSpec::None,
            "epca" => AttentionSpec::Epca(self.epca),
            "se" => AttentionSpec::Se { reduction },
            other => match other.parse::<ChannelDepKind>() {
                Ok(kind) => AttentionSpec::ChannelDep { kind, sizes: self.epca.sizes, reduction },
                Err(_) => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown attention kind '{other}' (none | epca | se | mlp | shared-mlp | cic)"),
                    })
                }
            },
        };
        if let AttentionSpec::Epca(cfg) = &spec {
            cfg.validate().map_err(|e| Error::Config { line, message: e.to_string() })?;
        }
        Ok(spec)
    }
}

impl RunConfig {
    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut attention = AttentionKeys::default();
        let mut section: Option<&str> = None;
        let mut seen = std::collections::HashSet::new();
        let path = |v: &str| base.join(v);

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                section = Some(SECTIONS.iter().find(|s| **s == name).ok_or_else(|| Error::Config {
                    line,
                    message: format!("unknown section [{name}]"),
                })?);
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config { line, message: format!("expected 'key = value', got '{content}'") });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = section else {
                return Err(Error::Config { line, message: format!("'{key}' appears before any [section]") });
            };
            if !seen.insert((sec, key.to_string())) {
                return Err(Error::Config { line, message: format!("duplicate key '{key}' in [{sec}]") });
            }
            let d = &mut cfg.data;
            let t = &mut cfg.train;
            match (sec, key) {
                ("data", "source") => {
                    d.source = match value {
                        "synth" => DataSource::Synth,
                        "files" => DataSource::Files,
                        _ => return Err(Error::Config { line, message: format!("source must be synth or files, got '{value}'") }),
                    }
                }
                ("data", "train_dir") => d.train_dir = Some(path(value)),
                ("data", "train_labels") => d.train_labels = Some(path(value)),
                ("data", "test_dir") => d.test_dir = Some(path(value)),
                ("data", "test_labels") => d.test_labels = Some(path(value)),
                ("data", "classes") => d.classes = parse_list(line, key, value)?,
                ("data", "image_size") => d.image_size = parse_value(line, key, value)?,
                ("data", "channels") => d.channels = parse_value(line, key, value)?,
                ("data", "synth_train_per_class") => d.synth_train_per_class = parse_value(line, key, value)?,
                ("data", "synth_test_per_class") => d.synth_test_per_class = parse_value(line, key, value)?,
                ("data", "synth_seed") => d.synth_seed = parse_value(line, key, value)?,
                ("data", "synth_noise") => d.synth_noise = parse_value(line, key, value)?,

                ("arch", "preset") => cfg.arch.preset = value.to_string(),
                ("arch", "num_classes") => cfg.arch.num_classes = Some(parse_value(line, key, value)?),

                ("attention", "kind") => attention.kind = Some((line, value.to_ascii_lowercase())),
                ("attention", "sizes") => {
                    attention.epca.sizes = parse_sizes(value)
                        .and_then(|s| EpcaConfig::with_sizes(&s))
                        .map_err(|e| Error::Config { line, message: e.to_string() })?
                        .sizes
                }
                ("attention", "variant") => {
                    attention.epca.variant =
                        value.parse().map_err(|e: Error| Error::Config { line, message: e.to_string() })?
                }
                ("attention", "dropout_rate") => attention.epca.dropout_rate = parse_value(line, key, value)?,
                ("attention", "bn_affine") => attention.epca.bn_affine = parse_bool(line, key, value)?,
                ("attention", "bn_eps") => attention.epca.bn_eps = parse_value(line, key, value)?,
                ("attention", "per_channel_weights") => {
                    attention.epca.per_channel_weights = parse_bool(line, key, value)?
                }
                ("attention", "reduction") => attention.reduction = Some(parse_value(line, key, value)?),

                ("train", "lr_max") => t.lr_max = parse_value(line, key, value)?,
                ("train", "momentum") => t.momentum = parse_value(line, key, value)?,
                ("train", "weight_decay") => t.weight_decay = parse_value(line, key, value)?,
                ("train", "decay_all") => t.decay_all = parse_bool(line, key, value)?,
                ("train", "batch_size") => t.batch_size = parse_value(line, key, value)?,
                ("train", "epochs") => t.epochs = parse_value(line, key, value)?,
                ("train", "t0") => t.t0 = parse_value(line, key, value)?,
                ("train", "t_mult") => t.t_mult = parse_value(line, key, value)?,
                ("train", "eta_min") => t.eta_min = parse_value(line, key, value)?,
                ("train", "paradigm") => {
                    t.paradigm = value.parse().map_err(|e: Error| Error::Config { line, message: e.to_string() })?
                }
                ("train", "hflip") => t.augment.hflip = parse_bool(line, key, value)?,
                ("train", "rotation_deg") => t.augment.rotation_deg = parse_value(line, key, value)?,
                ("train", "seed") => t.seed = parse_value(line, key, value)?,
                ("train", "val_fraction") => t.val_fraction = parse_value(line, key, value)?,
                ("train", "stop_at_train_acc") => t.stop_at_train_acc = Some(parse_value(line, key, value)?),
                ("train", "keep_checkpoints") => t.keep_checkpoints = parse_bool(line, key, value)?,
                ("train", "recalibrate_norms") => t.recalibrate_norms = parse_bool(line, key, value)?,
                ("train", "out_dir") => cfg.run.out_dir = path(value),
                ("train", "init") => cfg.run.init = Some(path(value)),

                ("eval", "batch_size") => cfg.eval.batch_size = parse_value(line, key, value)?,
                ("eval", "seeds") => cfg.eval.seeds = parse_list(line, key, value)?,

                ("explain", "layer") => cfg.explain.layer = Some(value.to_string()),
                ("explain", "class") => cfg.explain.class = parse_value(line, key, value)?,
                ("explain", "batch_size") => cfg.explain.batch_size = parse_value(line, key, value)?,

                _ => return Err(Error::Config { line, message: format!("unknown key '{key}' in [{sec}]") }),
            }
        }
        cfg.attention = attention.finish()?;
        cfg.train.validate()?;
        if cfg.data.source == DataSource::Files && cfg.data.train_dir.is_none() {
            return Err(Error::arg("[data] source = files needs train_dir"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    /// SHA-256 of the canonical rendering; equal configs hash equal however
    /// they were written.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Canonical text form: every key, in a fixed order, parseable back into the
/// same config.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let d = &self.data;
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let join = |v: &[String]| v.join(",");
        let _ = writeln!(s, "[data]");
        let _ = writeln!(s, "source = {}", if d.source == DataSource::Synth { "synth" } else { "files" });
        for (k, v) in [
            ("train_dir", opt_path(&d.train_dir)),
            ("train_labels", opt_path(&d.train_labels)),
            ("test_dir", opt_path(&d.test_dir)),
            ("test_labels", opt_path(&d.test_labels)),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        if !d.classes.is_empty() {
            let _ = writeln!(s, "classes = {}", join(&d.classes));
        }
        let _ = writeln!(s, "image_size = {}\nchannels = {}", d.image_size, d.channels);
        let _ = writeln!(
            s,
            "synth_train_per_class = {}\nsynth_test_per_class = {}\nsynth_seed = {}\nsynth_noise = {}",
            d.synth_train_per_class, d.synth_test_per_class, d.synth_seed, d.synth_noise
        );

        let _ = writeln!(s, "\n[arch]\npreset = {}", self.arch.preset);
        if let Some(k) = self.arch.num_classes {
            let _ = writeln!(s, "num_classes = {k}");
        }

        let _ = writeln!(s, "\n[attention]");
        let sizes = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        match &self.attention {
            AttentionSpec::None => {
                let _ = writeln!(s, "kind = none");
            }
            AttentionSpec::Epca(c) => {
                let _ = writeln!(
                    s,
                    "kind = epca\nsizes = {}\nvariant = {}\ndropout_rate = {}\nbn_affine = {}\nbn_eps = {}\nper_channel_weights = {}",
                    sizes(&c.sizes), c.variant, c.dropout_rate, c.bn_affine, c.bn_eps, c.per_channel_weights
                );
            }
            AttentionSpec::Se { reduction } => {
                let _ = writeln!(s, "kind = se\nreduction = {reduction}");
            }
            AttentionSpec::ChannelDep { kind, sizes: sz, reduction } => {
                let _ = writeln!(s, "kind = {kind}\nsizes = {}\nreduction = {reduction}", sizes(sz));
            }
        }

        let t = &self.train;
        let _ = writeln!(
            s,
            "\n[train]\nlr_max = {}\nmomentum = {}\nweight_decay = {}\ndecay_all = {}\nbatch_size = {}\nepochs = {}\nt0 = {}\nt_mult = {}\neta_min = {}\nparadigm = {}\nhflip = {}\nrotation_deg = {}\nseed = {}\nval_fraction = {}\nkeep_checkpoints = {}\nrecalibrate_norms = {}\nout_dir = {}",
            t.lr_max,
            t.momentum,
            t.weight_decay,
            t.decay_all,
            t.batch_size,
            t.epochs,
            t.t0,
            t.t_mult,
            t.eta_min,
            t.paradigm,
            t.augment.hflip,
            t.augment.rotation_deg,
            t.seed,
            t.val_fraction,
            t.keep_checkpoints,
            t.recalibrate_norms,
            self.run.out_dir.display()
        );
        if let Some(v) = t.stop_at_train_acc {
            let _ = writeln!(s, "stop_at_train_acc = {v}");
        }
        if let Some(p) = &self.run.init {
            let _ = writeln!(s, "init = {}", p.display());
        }

        let seeds: Vec<String> = self.eval.seeds.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "\n[eval]\nbatch_size = {}\nseeds = {}", self.eval.batch_size, seeds.join(","));

        let _ = writeln!(s, "\n[explain]");
        if let Some(l) = &self.explain.layer {
            let _ = writeln!(s, "layer = {l}");
        }
        let _ = write!(s, "class = {}\nbatch_size = {}\n", self.explain.class, self.explain.batch_size);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Paradigm;

    #[test]
    fn defaults_from_empty_text() {
        let cfg = RunConfig::parse("", Path::new(".")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.lr_max, 0.0015);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = "[train]\nepochs = 3\n\n# note\nlearning_rate = 0.1\n";
        match RunConfig::parse(text, Path::new(".")).unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("learning_rate"));
            }
            e => panic!("wrong error {e}"),
        }
    }

    #[test]
    fn unknown_section_and_orphan_key() {
        let err = RunConfig::parse("[model]\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let err = RunConfig::parse("epochs = 2\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
    }

    #[test]
    fn attention_kind_may_follow_its_settings() {
        let text = "[attention]\nsizes = 1,2,4\nvariant = hier\nkind = epca\n";
        let cfg = RunConfig::parse(text, Path::new(".")).unwrap();
        let AttentionSpec::Epca(e) = cfg.attention else { panic!() };
        assert_eq!(e.sizes, [1, 2, 4]);
        assert_eq!(e.variant, crate::attention::FusionVariant::Hierarchical);
    }

    #[test]
    fn paths_are_relative_to_the_file() {
        let text = "[data]\nsource = files\ntrain_dir = imgs\n";
        let cfg = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.data.train_dir, Some(PathBuf::from("/cfg/imgs")));
    }

    #[test]
    fn paradigm_value() {
        let cfg = RunConfig::parse("[train]\nparadigm = freeze\n", Path::new(".")).unwrap();
        assert_eq!(cfg.train.paradigm, Paradigm::PretrainFreeze);
    }
}
