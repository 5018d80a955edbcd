mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use error::CliError;

/// Joint recurrent competing risks and terminal event modelling.
#[derive(Debug, Parser)]
#[command(name = "rcrte", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; `print-defaults` shows every key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and its ground truth.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the model by EM.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Training data (JSON Lines or CSV).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Start from the estimates of a saved model.
        #[arg(long)]
        init_model: Option<PathBuf>,
    },
    /// Simulate the future of a new unit.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Saved model (JSON).
        #[arg(long)]
        model: Option<PathBuf>,
        /// History of the new unit.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Number of simulated paths.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Brier scores of a saved model on a test set.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Saved model (JSON).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Test data (JSON Lines or CSV).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// K-fold cross-validated Brier scores.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Data to split into folds (JSON Lines or CSV).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the default configuration.
    PrintDefaults,
}

const OUT_ENV: &str = "RCRTE_OUT_DIR";

fn setup(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let level = match common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Input(format!("no output directory: pass --out or set {OUT_ENV}")))?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::PrintDefaults => {
            print!("{}", RunConfig::default().to_toml()?);
            Ok(())
        }
        Command::Generate { common } => {
            let (cfg, out) = setup(&common)?;
            execute(cfg, out, common.threads, commands::generate)
        }
        Command::Fit {
            common,
            data,
            init_model,
        } => {
            let (mut cfg, out) = setup(&common)?;
            cfg.fit.data = data.or(cfg.fit.data);
            cfg.fit.init_model = init_model.or(cfg.fit.init_model);
            execute(cfg, out, common.threads, commands::fit)
        }
        Command::Predict {
            common,
            model,
            history,
            paths,
        } => {
            let (mut cfg, out) = setup(&common)?;
            cfg.predict.model = model.or(cfg.predict.model);
            cfg.predict.history = history.or(cfg.predict.history);
            cfg.predict.paths = paths.unwrap_or(cfg.predict.paths);
            execute(cfg, out, common.threads, commands::predict)
        }
        Command::Evaluate {
            common,
            model,
            data,
        } => {
            let (mut cfg, out) = setup(&common)?;
            cfg.evaluate.model = model.or(cfg.evaluate.model);
            cfg.evaluate.data = data.or(cfg.evaluate.data);
            execute(cfg, out, common.threads, commands::evaluate)
        }
        Command::Cv { common, data } => {
            let (mut cfg, out) = setup(&common)?;
            cfg.cv.data = data.or(cfg.cv.data);
            execute(cfg, out, common.threads, commands::cv)
        }
    }
}

fn execute(
    mut cfg: RunConfig,
    out: PathBuf,
    threads: usize,
    action: fn(&Context) -> Result<(), CliError>,
) -> Result<(), CliError> {
    // the output location does not change results, so it stays out of the hash
    cfg.out = None;
    commands::ensure_dir(&out)?;
    let hash = cfg.hash()?;
    let ctx = Context { cfg, out, hash };
    rcrte_core::par::with_threads(threads, || action(&ctx))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
