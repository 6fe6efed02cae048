use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use epca::config::RunConfig;
use epca::data::netpbm;
use epca::data::resize::bilinear_planes;
use epca::data::synth::{self, SynthConfig};
use epca::data::{ingest, write_dataset};
use epca::experiment::{self, Datasets};
use epca::explain::{export_scale_weight_stats, grad_cam};
use epca::gradcheck::run_suite;
use epca::train;
use epca::{Error, Tensor};

#[derive(Parser)]
#[command(name = "epca", version, about = "Efficient pyramid channel attention: training, evaluation and inspection")]
struct Cli {
    /// Where to write run-manifest.json (default: the command's output
    /// directory, else the working directory).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes history.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides [train] out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the configured test set.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Report CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every operator and attention variant.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Parameter and FLOP table of the configured model.
    Summary {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracy grid over pyramid grid-size sets.
    AblateSizes {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "1|1,2|1,3|1,4|1,2,3|1,2,4")]
        sizes: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy of the four fusion variants and the channel-dependency heads.
    AblateFusion {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grad-CAM heatmap of one image, written as PGM plus CSV.
    Gradcam {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        class: usize,
        #[arg(long)]
        layer: String,
        /// Defaults to the run.cfg saved beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "heatmap.pgm")]
        out: PathBuf,
    },
    /// Per-stage statistics of the fusion weights over a labelled image folder.
    ExportStats {
        #[arg(long)]
        ckpt: PathBuf,
        /// Folder with images and labels.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "stats")]
        out: PathBuf,
    },
    /// Write the synthetic dataset as PGM files plus labels.csv.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Images in total, split evenly over the classes.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    args: Vec<String>,
    config_hash: Option<String>,
    seed: Option<u64>,
    version: String,
    status: String,
}

/// What a finished command reports for the manifest.
#[derive(Default)]
struct Outcome {
    config_hash: Option<String>,
    seed: Option<u64>,
    dir: Option<PathBuf>,
    failed: bool,
}

type CmdResult = Result<Outcome, Error>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version exit 0, usage errors 2
            e.exit();
        }
    };
    let name = command_name(&cli.command);
    let result = dispatch(&cli.command);
    let (outcome, code) = match result {
        Ok(o) => {
            let code = if o.failed { ExitCode::from(1) } else { ExitCode::SUCCESS };
            (o, code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (Outcome { failed: true, ..Outcome::default() }, ExitCode::from(1))
        }
    };
    let manifest = Manifest {
        command: name.to_string(),
        args: std::env::args().skip(1).collect(),
        config_hash: outcome.config_hash,
        seed: outcome.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: if outcome.failed { "failed" } else { "ok" }.into(),
    };
    let path = cli.manifest.unwrap_or_else(|| {
        outcome.dir.unwrap_or_else(|| PathBuf::from(".")).join("run-manifest.json")
    });
    let written = path
        .parent()
        .map_or(Ok(()), |p| if p.as_os_str().is_empty() { Ok(()) } else { std::fs::create_dir_all(p) })
        .and_then(|_| std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("plain data")));
    if let Err(e) = written {
        eprintln!("error: cannot write {}: {e}", path.display());
        return ExitCode::from(1);
    }
    code
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Gradcheck { .. } => "gradcheck",
        Command::Summary { .. } => "summary",
        Command::AblateSizes { .. } => "ablate-sizes",
        Command::AblateFusion { .. } => "ablate-fusion",
        Command::Gradcam { .. } => "gradcam",
        Command::ExportStats { .. } => "export-stats",
        Command::Synth { .. } => "synth",
    }
}

fn dispatch(command: &Command) -> CmdResult {
    match command {
        Command::Train { config, seed, out } => cmd_train(config, *seed, out.as_deref()),
        Command::Eval { config, ckpt, out } => cmd_eval(config, ckpt, out.as_deref()),
        Command::Gradcheck { tol, seeds } => cmd_gradcheck(*tol, *seeds),
        Command::Summary { config } => cmd_summary(config),
        Command::AblateSizes { config, sizes, out } => {
            let cfg = RunConfig::load(config)?;
            let base = match &cfg.attention {
                epca::attention::AttentionSpec::Epca(e) => e.clone(),
                _ => Default::default(),
            };
            let entries = experiment::size_grid(&base, &experiment::parse_size_grid(sizes)?)?;
            cmd_ablate(cfg, "Accuracy by pyramid grid sizes", entries, out.as_deref())
        }
        Command::AblateFusion { config, out } => {
            let cfg = RunConfig::load(config)?;
            let (base, reduction) = match &cfg.attention {
                epca::attention::AttentionSpec::Epca(e) => (e.clone(), epca::attention::DEFAULT_REDUCTION),
                epca::attention::AttentionSpec::ChannelDep { sizes, reduction, .. } => {
                    (epca::attention::EpcaConfig::with_sizes(sizes)?, *reduction)
                }
                _ => (Default::default(), epca::attention::DEFAULT_REDUCTION),
            };
            let entries = experiment::fusion_grid(&base, reduction);
            cmd_ablate(cfg, "Fusion variants and channel-dependency heads", entries, out.as_deref())
        }
        Command::Gradcam { ckpt, image, class, layer, config, out } => {
            cmd_gradcam(ckpt, image, *class, layer, config.as_deref(), out)
        }
        Command::ExportStats { ckpt, data, config, out } => cmd_export_stats(ckpt, data, config.as_deref(), out),
        Command::Synth { out, n, seed, size } => cmd_synth(out, *n, *seed, *size),
    }
}

fn cmd_train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> CmdResult {
    let cfg = RunConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.train.seed);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.run.out_dir.clone());
    let data = experiment::load_datasets(&cfg)?;
    println!("model: {} with {}", cfg.arch.preset, cfg.attention);
    println!("train: {} images, test: {}", data.train.len(), data.test.as_ref().map_or(0, |t| t.len()));
    println!("{}", train::HISTORY_HEADER);
    let outcome = experiment::run_with(&cfg, &cfg.attention, seed, &data, Some(&dir), &mut |r| {
        println!("{}", r.csv_row())
    })?;
    println!("\n{}", outcome.report);
    std::fs::write(dir.join("report.csv"), outcome.report.to_csv())?;
    println!("outputs in {}", dir.display());
    Ok(Outcome { config_hash: Some(cfg.hash()), seed: Some(seed), dir: Some(dir), failed: false })
}

fn cmd_eval(config: &Path, ckpt: &Path, out: Option<&Path>) -> CmdResult {
    let cfg = RunConfig::load(config)?;
    let Datasets { train, test } = experiment::load_datasets(&cfg)?;
    let ds = test.unwrap_or(train);
    let mut model = experiment::load_model(&cfg, ckpt)?;
    let report = train::evaluate(&mut model, &ds, cfg.eval.batch_size)?;
    println!("{report}");
    let dir = match out {
        Some(path) => {
            std::fs::write(path, report.to_csv())?;
            path.parent().map(Path::to_path_buf)
        }
        None => None,
    };
    Ok(Outcome { config_hash: Some(cfg.hash()), seed: Some(cfg.train.seed), dir, failed: false })
}

fn cmd_gradcheck(tol: f64, seeds: u64) -> CmdResult {
    let entries = run_suite(tol, seeds)?;
    let mut failed = false;
    println!("{:<32} {:>12} {:>6} {:>8}", "case", "max rel err", "pass", "ms");
    for e in &entries {
        failed |= !e.report.pass;
        println!(
            "{:<32} {:>12.3e} {:>6} {:>8}",
            e.name,
            e.report.max_rel_err,
            if e.report.pass { "ok" } else { "FAIL" },
            e.elapsed.as_millis()
        );
    }
    let worst = entries.iter().map(|e| e.report.max_rel_err).fold(0.0, f64::max);
    println!("{} cases, worst {worst:.3e}, tolerance {tol:e}", entries.len());
    Ok(Outcome { failed, ..Outcome::default() })
}

fn cmd_summary(config: &Path) -> CmdResult {
    let cfg = RunConfig::load(config)?;
    let k = cfg.arch.num_classes.unwrap_or(match cfg.data.source {
        epca::config::DataSource::Synth => synth::CLASS_NAMES.len(),
        epca::config::DataSource::Files => cfg.data.classes.len().max(2),
    });
    let model = experiment::build_model(&cfg, &cfg.attention, k, cfg.train.seed)?;
    println!("{}", model.summary());
    Ok(Outcome { config_hash: Some(cfg.hash()), seed: Some(cfg.train.seed), ..Outcome::default() })
}

fn cmd_ablate(
    cfg: RunConfig,
    title: &str,
    entries: Vec<(String, epca::attention::AttentionSpec)>,
    out: Option<&Path>,
) -> CmdResult {
    let data = experiment::load_datasets(&cfg)?;
    let report = experiment::ablate(&cfg, title, &entries, &data, &mut |label, seed, r| {
        println!("{label:<20} seed {seed}: acc {:.4} f1 {:.4}", r.acc, r.f1)
    })?;
    println!("\n{report}");
    let dir = match out {
        Some(path) => {
            std::fs::write(path, report.to_csv())?;
            path.parent().map(Path::to_path_buf)
        }
        None => None,
    };
    Ok(Outcome { config_hash: Some(cfg.hash()), seed: None, dir, failed: false })
}

fn cmd_gradcam(ckpt: &Path, image: &Path, class: usize, layer: &str, config: Option<&Path>, out: &Path) -> CmdResult {
    let cfg = experiment::config_for_checkpoint(ckpt, config)?;
    let mut model = experiment::load_model(&cfg, ckpt)?;
    let img = netpbm::decode_file(image)?;
    let (c, h, w) = model.spec.input;
    if img.channels != c {
        return Err(Error::Argument(format!("model takes {c}-channel images, {} has {}", image.display(), img.channels)));
    }
    let data = bilinear_planes(&img.data, c, img.height, img.width, h, w);
    let map = grad_cam(&mut model, &Tensor::from_vec([c, h, w], data)?, class, layer)?;
    std::fs::write(out, map.to_pgm())?;
    std::fs::write(out.with_extension("csv"), map.to_csv())?;
    println!("heatmap for class {class} at {layer} written to {}", out.display());
    Ok(Outcome {
        config_hash: Some(cfg.hash()),
        seed: None,
        dir: out.parent().map(Path::to_path_buf),
        failed: false,
    })
}

fn cmd_export_stats(ckpt: &Path, data: &Path, config: Option<&Path>, out: &Path) -> CmdResult {
    let cfg = experiment::config_for_checkpoint(ckpt, config)?;
    let mut model = experiment::load_model(&cfg, ckpt)?;
    let (c, h, w) = model.spec.input;
    let ds = ingest(data, &data.join("labels.csv"), (h, w), c, &cfg.data.classes)?;
    let stats = export_scale_weight_stats(&mut model, &ds, cfg.explain.batch_size)?;
    for path in stats.write(out)? {
        println!("wrote {}", path.display());
    }
    for s in &stats.stages {
        let shares: Vec<String> = s.features.iter().map(|f| format!("{:.3}", f.normalized_mean)).collect();
        println!("{:<5} {:<16} {}", s.stage, s.block, shares.join(" "));
    }
    Ok(Outcome { config_hash: Some(cfg.hash()), seed: None, dir: Some(out.to_path_buf()), failed: false })
}

fn cmd_synth(out: &Path, n: usize, seed: u64, size: usize) -> CmdResult {
    let per_class = n.div_ceil(synth::CLASS_NAMES.len());
    let ds = synth::generate(per_class, &SynthConfig { size, ..SynthConfig::default() }, seed)?;
    write_dataset(&ds, out)?;
    println!("{} images of {size}x{size} in {}", ds.len(), out.display());
    Ok(Outcome { config_hash: None, seed: Some(seed), dir: Some(out.to_path_buf()), failed: false })
}
