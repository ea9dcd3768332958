use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualformer::{Error, Result};
use dualformer_cli::commands::{self, DistillOptions, EvalOptions, ModelKind};
use dualformer_cli::{exit_code, RunConfig, OUT_ENV};

/// Traffic-speed forecasting with a dual spatial/temporal transformer
/// distilled from a graph-convolutional teacher.
///
/// Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric
/// abort.
#[derive(Debug, Parser)]
#[command(name = "dualformer", version)]
struct Cli {
    /// Run-config TOML file. Built-in defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. Falls back to `out_dir` in the config, then to
    /// $DUALFORMER_OUT, then to ./dualformer-out.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the epoch cap of every training run.
    #[arg(long, global = true)]
    max_epochs: Option<usize>,

    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write speeds.csv, adjacency.csv and classes.csv from the synthetic generator.
    Synth,
    /// Pretrain the graph teacher and save teacher.ckpt.
    TrainTeacher,
    /// Distill the student from teacher.ckpt and compare the two.
    Distill {
        /// Soft-loss weight.
        #[arg(long)]
        alpha: Option<f64>,
        /// Hard-loss weight. Defaults to 1 - alpha when only alpha is given.
        #[arg(long)]
        beta: Option<f64>,
        /// Train the dual, spatial-only and temporal-only students.
        #[arg(long)]
        ablation: bool,
        /// Teacher checkpoint. Defaults to <out>/teacher.ckpt.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Distill one student per loss weighting and write sweep.csv.
    Sweep {
        /// Comma-separated alpha values, each paired with beta = 1 - alpha.
        /// Defaults to 0.1,0.3,0.5,0.7,0.9.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Teacher checkpoint. Defaults to <out>/teacher.ckpt.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long, value_enum, default_value = "student")]
        model: ModelKind,
        /// Checkpoint file. Defaults to <out>/<model>.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also split the whole series into this many consecutive periods.
        #[arg(long)]
        periods: Option<usize>,
        /// Train a fresh model inside each period instead of scoring the
        /// checkpoint across them.
        #[arg(long, requires = "periods")]
        retrain_per_period: bool,
        /// Worker threads for the period evaluation.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Also report metrics for each forecast step.
        #[arg(long)]
        per_horizon: bool,
    },
}

fn resolve_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = cli.max_epochs {
        cfg.training.max_epochs = e;
        if let Some(t) = &mut cfg.teacher_training {
            t.max_epochs = e;
        }
    }
    if let Command::Distill { alpha, beta, .. } = &cli.command {
        match (alpha, beta) {
            (Some(a), Some(b)) => (cfg.training.alpha, cfg.training.beta) = (*a, *b),
            (Some(a), None) => (cfg.training.alpha, cfg.training.beta) = (*a, 1.0 - a),
            (None, Some(b)) => (cfg.training.alpha, cfg.training.beta) = (1.0 - b, *b),
            (None, None) => {}
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dualformer-out"));
    cfg.out_dir = Some(out.clone());
    let cfg = cfg.resolve();
    cfg.validate()?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, out) = resolve_config(&cli)?;
    commands::prepare_out_dir(&cfg, &out)?;
    log::info!("resolved config:\n{}", cfg.to_toml());
    let mut console = std::io::stdout();
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg, &out),
        Command::TrainTeacher => commands::cmd_train_teacher(&cfg, &out, &mut console).map(drop),
        Command::Distill { ablation, teacher, .. } => {
            commands::cmd_distill(&cfg, &out, &DistillOptions { teacher, ablation }, &mut console).map(drop)
        }
        Command::Sweep { alphas, teacher } => {
            let pairs = alphas.map(|a| a.into_iter().map(|x| (x, 1.0 - x)).collect());
            commands::cmd_sweep(&cfg, &out, teacher.as_deref(), pairs, &mut console).map(drop)
        }
        Command::Eval {
            model,
            checkpoint,
            periods,
            retrain_per_period,
            threads,
            per_horizon,
        } => {
            let opts = EvalOptions {
                model,
                checkpoint,
                periods,
                retrain_per_period,
                threads,
                per_horizon,
            };
            commands::cmd_eval(&cfg, &out, &opts, &mut console).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if let Error::NonFinite(_) = e {
                eprintln!("training aborted on a non-finite value; try a smaller learning rate");
            }
            ExitCode::from(code as u8)
        }
    }
}
