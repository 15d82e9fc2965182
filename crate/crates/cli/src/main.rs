//! Experiment runner CLI.
//!
//! Subcommands: `run` (one experiment), `sweep` (multi-seed aggregate), and
//! `gp-check` (the Gaussian-process validation reports). Experiments can be
//! described by a TOML config file, command-line flags, or both; flags win.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pec_core::harness::{
    emit_report, emit_sweep, parse_split, run_experiment, run_gp_check, run_seed_sweep,
    BalancingMode, BudgetMode, DatasetChoice, ExperimentConfig, ImbalanceSpec, Method, RunReport,
};
use pec_core::nn::InitKind;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pec",
    about = "Class-incremental learning experiments around prediction-error classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment and print its report.
    Run(RunArgs),
    /// Run one experiment per seed and aggregate mean and standard error.
    Sweep(SweepArgs),
    /// Empirically check the Gaussian-process score bounds (1) or the
    /// concentration trend (2).
    GpCheck(GpCheckArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// TOML file with an experiment description; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pec | nearest_mean | slda | finetune | er | labels_trick
    #[arg(long)]
    method: Option<String>,
    /// mnist | cifar10 | synthetic
    #[arg(long)]
    dataset: Option<String>,
    /// Task split, e.g. 10/1 or 5/2.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Linear learning-rate decay to zero.
    #[arg(long, conflicts_with = "no_decay")]
    decay: bool,
    #[arg(long)]
    no_decay: bool,
    /// single-pass | equal | a fixed per-class step count
    #[arg(long)]
    budget: Option<String>,
    /// none | oracle | buffer
    #[arg(long)]
    balancing: Option<String>,
    /// Replay/balancing buffer capacity.
    #[arg(long)]
    buffer_capacity: Option<usize>,
    /// SLDA shrinkage coefficient.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Training-set imbalance as DOUBLED:HALVED class indices, e.g. 0:1.
    #[arg(long)]
    imbalance: Option<String>,
    /// Dataset root (defaults to $PEC_DATA_DIR or the nearest ./data).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    student_width: Option<usize>,
    #[arg(long)]
    teacher_width: Option<usize>,
    #[arg(long)]
    output_dim: Option<usize>,
    #[arg(long)]
    pool_target: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// kaiming | xavier | uniform=A
    #[arg(long)]
    init: Option<String>,
    /// Confirm long CPU-scale runs (conv presets on full datasets).
    #[arg(long)]
    extended: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json | csv
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Seed list: a..b (inclusive) or comma-separated values.
    #[arg(long, default_value = "0..9")]
    seeds: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct GpCheckArgs {
    /// 1: score-vs-variance bound; 2: concentration trend.
    #[arg(long)]
    proposition: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(args: &ExperimentArgs, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&body).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &args.method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(d) = &args.dataset {
        cfg.dataset = DatasetChoice::parse(d)?;
        if cfg.dataset == DatasetChoice::Synthetic && args.split.is_none() {
            cfg.split = (cfg.synthetic.classes, 1);
        }
    }
    if let Some(s) = &args.split {
        cfg.split = parse_split(s)?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(lr) = args.lr {
        cfg.lr = Some(lr);
    }
    if let Some(bs) = args.batch_size {
        cfg.batch_size = Some(bs);
    }
    if args.decay {
        cfg.decay = Some(true);
    }
    if args.no_decay {
        cfg.decay = Some(false);
    }
    if let Some(b) = &args.budget {
        cfg.budget = match b.as_str() {
            "single-pass" | "single_pass" => BudgetMode::SinglePass,
            "equal" | "equal-budgets" | "equal_budgets" => BudgetMode::EqualBudgets,
            steps => BudgetMode::Steps(
                steps
                    .parse::<usize>()
                    .with_context(|| format!("budget {steps:?} is not a step count"))?,
            ),
        };
    }
    if let Some(b) = &args.balancing {
        cfg.balancing = match b.as_str() {
            "none" => BalancingMode::None,
            "oracle" => BalancingMode::Oracle,
            "buffer" => BalancingMode::Buffer,
            other => bail!("unknown balancing mode {other:?}"),
        };
    }
    if let Some(cap) = args.buffer_capacity {
        cfg.buffer_capacity = cap;
    }
    if let Some(eps) = args.epsilon {
        cfg.slda_epsilon = Some(eps);
    }
    if let Some(imb) = &args.imbalance {
        let (d, h) = imb
            .split_once(':')
            .with_context(|| format!("imbalance {imb:?} is not DOUBLED:HALVED"))?;
        cfg.imbalance = Some(ImbalanceSpec {
            doubled: d.parse()?,
            halved: h.parse()?,
        });
    }
    if let Some(dir) = &args.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    cfg.arch.student_width = args.student_width.or(cfg.arch.student_width);
    cfg.arch.teacher_width = args.teacher_width.or(cfg.arch.teacher_width);
    cfg.arch.output_dim = args.output_dim.or(cfg.arch.output_dim);
    cfg.arch.pool_target = args.pool_target.or(cfg.arch.pool_target);
    cfg.arch.depth = args.depth.or(cfg.arch.depth);
    if let Some(init) = &args.init {
        cfg.arch.init = Some(match init.as_str() {
            "kaiming" => InitKind::KaimingUniform,
            "xavier" => InitKind::Xavier,
            other => match other.strip_prefix("uniform=") {
                Some(a) => InitKind::Uniform(a.parse()?),
                None => bail!("unknown init {other:?} (kaiming | xavier | uniform=A)"),
            },
        });
    }
    if cfg.dataset == DatasetChoice::Cifar10 && cfg.method == Method::Pec && !args.extended {
        eprintln!(
            "note: the CIFAR-10 conv preset takes hours on CPU; pass --extended to acknowledge"
        );
    }
    Ok(cfg)
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.trim().parse().context("bad seed range start")?;
        let hi: u64 = b.trim().parse().context("bad seed range end")?;
        if hi < lo {
            bail!("empty seed range {spec:?}");
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(Into::into))
        .collect()
}

fn print_run(report: &RunReport) {
    println!(
        "{:?} on {:?} ({}/{}), seed {}: accuracy {:.2}%",
        report.config.method,
        report.config.dataset,
        report.config.split.0,
        report.config.split.1,
        report.seed,
        report.accuracy * 100.0
    );
    println!(
        "  params {}  inference MACs {}  wall time {:.1}s",
        report.param_count, report.mac_count, report.wall_time_s
    );
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = build_config(&args.experiment, args.seed)?;
            let report = run_experiment(&cfg)?;
            print_run(&report);
            if let Some(out) = &args.out {
                emit_report(&report, out, &args.format)?;
                println!("  report written to {}", out.display());
            }
        }
        Command::Sweep(args) => {
            let cfg = build_config(&args.experiment, None)?;
            let seeds = parse_seeds(&args.seeds)?;
            let sweep = run_seed_sweep(&cfg, &seeds)?;
            for run in &sweep.runs {
                print_run(run);
            }
            println!(
                "mean accuracy over {} seeds: {:.2}% (+- {:.2} SE){}",
                sweep.runs.len(),
                sweep.mean_accuracy * 100.0,
                sweep.std_error * 100.0,
                if sweep.single_seed {
                    "  [single seed: SE is 0 by convention]"
                } else {
                    ""
                }
            );
            if let Some(out) = &args.out {
                emit_sweep(&sweep, out, &args.format)?;
                println!("report written to {}", out.display());
            }
        }
        Command::GpCheck(args) => {
            let report = run_gp_check(args.proposition, args.seed)?;
            let body = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(out) => {
                    std::fs::write(out, &body)?;
                    println!("report written to {}", out.display());
                }
                None => println!("{body}"),
            }
        }
    }
    Ok(())
}
