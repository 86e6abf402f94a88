//! `basconv`: prepare data, train, evaluate, recommend and run sweeps.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use basconv::config::{DataFormat, RunConfig};
use basconv::eval::ModelKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "basconv",
    version,
    about = "Within-basket recommendation with BasConv"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for splitting, initialization and sampling.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Keep logs byte-identical across reruns by leaving out wall-clock times
    /// (`--deterministic=false` to include them).
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    deterministic: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load transactions, build the graph and write the train/test split.
    Prepare {
        /// Transaction file or Instacart directory (overrides data.path).
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, value_name = "N")]
        min_basket_size: Option<usize>,
        /// Keep only this many randomly chosen users.
        #[arg(long, value_name = "N")]
        sample_users: Option<usize>,
    },
    /// Train a model on the prepared split.
    Train {
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
        #[arg(long, value_name = "LR")]
        learning_rate: Option<f64>,
        /// Continue from a checkpoint for another `epochs` epochs.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
    },
    /// Score the test split and write metrics.
    Evaluate {
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Defaults to `<out>/<model>/ckpt-best.bcv`.
        #[arg(long, value_name = "CKPT")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "K")]
        k: Option<usize>,
    },
    /// Rank items for an ad-hoc partial basket of a known user.
    Recommend {
        #[arg(long, value_name = "ID")]
        user: String,
        /// Comma-separated item ids already in the basket.
        #[arg(long, value_name = "IDS", value_delimiter = ',', num_args = 0..)]
        items: Vec<String>,
        #[arg(long, value_name = "CKPT")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "K", default_value_t = 10)]
        k: usize,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Retrain across training fractions or layer counts.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        /// Fractions or layer counts, comma-separated.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Models for the fraction sweep, comma-separated.
        #[arg(long, value_enum, value_delimiter = ',')]
        models: Vec<ModelArg>,
    },
    /// Show configuration.
    Config {
        /// Print every default setting as TOML.
        #[arg(long)]
        print_defaults: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Basconv,
    ItemPop,
    BprMf,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Basconv => ModelKind::BasConv,
            ModelArg::ItemPop => ModelKind::ItemPop,
            ModelArg::BprMf => ModelKind::BprMf,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Instacart,
    EdgeList,
    Planted,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DataFormat::Csv,
            FormatArg::Instacart => DataFormat::Instacart,
            FormatArg::EdgeList => DataFormat::EdgeList,
            FormatArg::Planted => DataFormat::Planted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Fraction,
    Layers,
}

/// Defaults, then the config file, then `BASCONV_*` variables, then flags.
///
/// Without `--config`, commands after `prepare` start from the config that
/// `prepare` saved in the output directory.
fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let base = match &global.config {
        Some(path) => Some(path.clone()),
        None if !matches!(command, Command::Prepare { .. }) => {
            let mut probe = RunConfig::default();
            probe.apply_env()?;
            let out = global.out.clone().unwrap_or(probe.run.out_dir);
            Some(out.join(artifacts::CONFIG_FILE)).filter(|p| p.exists())
        }
        None => None,
    };
    let mut cfg = match &base {
        Some(path) => {
            log::info!("using config {}", path.display());
            RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    for key in cfg.apply_env()? {
        log::info!("config override from environment: {key}");
    }
    if let Some(seed) = global.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &global.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(t) = global.threads {
        cfg.run.threads = t;
    }
    if let Some(d) = global.deterministic {
        cfg.run.deterministic = d;
    }
    match command {
        Command::Prepare {
            input,
            format,
            min_basket_size,
            sample_users,
        } => {
            if let Some(p) = input {
                cfg.data.path = p.clone();
            }
            if let Some(f) = format {
                cfg.data.format = (*f).into();
            }
            if let Some(m) = min_basket_size {
                cfg.data.min_basket_size = *m;
            }
            if let Some(n) = sample_users {
                cfg.data.sample_users = *n;
            }
        }
        Command::Train {
            model,
            epochs,
            learning_rate,
            ..
        } => {
            if let Some(m) = model {
                cfg.eval.model = (*m).into();
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = *lr;
            }
        }
        Command::Evaluate { model, k, .. } => {
            if let Some(m) = model {
                cfg.eval.model = (*m).into();
            }
            if let Some(k) = k {
                cfg.eval.k = *k;
            }
        }
        Command::Sweep { models, .. } if !models.is_empty() => {
            cfg.eval.sweep_models = models.iter().map(|&m| m.into()).collect();
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Config {
        print_defaults: true,
    } = cli.command
    {
        print!("{}", RunConfig::default().to_toml_string()?);
        return Ok(());
    }
    let cfg = resolve_config(&cli.global, &cli.command)?;
    if cfg.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Prepare { .. } => commands::prepare(&cfg),
        Command::Train { resume, .. } => commands::train(&cfg, resume.as_deref()),
        Command::Evaluate { checkpoint, .. } => commands::evaluate(&cfg, checkpoint.as_deref()),
        Command::Recommend {
            user,
            items,
            checkpoint,
            k,
            json,
        } => commands::recommend(&cfg, &user, &items, checkpoint.as_deref(), k, json),
        Command::Sweep { kind, values, .. } => commands::sweep(&cfg, kind, &values),
        Command::Config { .. } => {
            print!("{}", cfg.to_toml_string()?);
            println!("# config hash: {}", cfg.hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
