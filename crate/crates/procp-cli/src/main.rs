//! Batch front-end: prediction sets for missing outcomes in CSV data,
//! accuracy diagnostics for estimated propensities, and simulation studies.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use procp_cli::{commands, config, csvio, MethodName, PropensityFlag};

#[derive(Parser)]
#[command(
    name = "procp",
    about = "Simultaneous prediction sets for outcomes missing at random"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build prediction sets for the missing outcomes of a CSV dataset.
    Predict {
        /// Input CSV (feature columns + `a` + `y` [+ `p`]).
        #[arg(long)]
        input: PathBuf,
        /// Flat key=value defaults; explicit flags override.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Contiguous partition block size (no partitioning when omitted).
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long, value_enum)]
        propensity: Option<PropensityFlag>,
        /// Fraction of rows used as the training split.
        #[arg(long)]
        split_ratio: Option<f64>,
        /// Shuffle rows (seeded) before splitting and partitioning.
        #[arg(long)]
        shuffle_blocks: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated categorical feature columns.
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        /// Load a serialized mean model instead of fitting one.
        #[arg(long)]
        mean_model: Option<PathBuf>,
        /// Also write mean.model / propensity.model records.
        #[arg(long)]
        save_models: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a multi-trial coverage study on a built-in generator.
    Simulate {
        /// 1, 2, or highdim.
        #[arg(long)]
        setting: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long, value_enum)]
        propensity: Option<PropensityFlag>,
        /// Calibration size per trial.
        #[arg(long)]
        n: Option<usize>,
        /// Training draw size.
        #[arg(long)]
        train_n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare two propensity sources on a CSV and report the implied
    /// coverage slack.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        /// column[:name], logistic, or kernel.
        #[arg(long)]
        truth: String,
        #[arg(long)]
        estimate: String,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    if let Ok(threads) = std::env::var("PROCP_THREADS") {
        let threads: usize = threads
            .parse()
            .context("PROCP_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("building the worker pool")?;
    }
    match Cli::parse().command {
        Command::Predict {
            input,
            config,
            mut method,
            mut alpha,
            mut epsilon,
            mut delta,
            mut block_size,
            mut propensity,
            mut split_ratio,
            shuffle_blocks,
            mut seed,
            categorical,
            mean_model,
            save_models,
            out,
        } => {
            if let Some(path) = config {
                let map = config::read_config(&path)?;
                config::fill(&mut alpha, &map, "alpha")?;
                config::fill(&mut epsilon, &map, "epsilon")?;
                config::fill(&mut delta, &map, "delta")?;
                config::fill(&mut block_size, &map, "block-size")?;
                config::fill(&mut split_ratio, &map, "split-ratio")?;
                config::fill(&mut seed, &map, "seed")?;
                if method.is_none() {
                    if let Some(raw) = map.get("method") {
                        method = Some(
                            MethodName::from_str(raw, true)
                                .map_err(|e| anyhow::anyhow!("config key 'method': {e}"))?,
                        );
                    }
                }
                if propensity.is_none() {
                    if let Some(raw) = map.get("propensity") {
                        propensity = Some(
                            PropensityFlag::from_str(raw, true)
                                .map_err(|e| anyhow::anyhow!("config key 'propensity': {e}"))?,
                        );
                    }
                }
            }
            let args = commands::predict::PredictArgs {
                input: input.clone(),
                method: method.unwrap_or(MethodName::ProCp),
                alpha: alpha.unwrap_or(0.2),
                epsilon: epsilon.unwrap_or(0.1),
                delta,
                block_size,
                propensity: propensity.unwrap_or(PropensityFlag::Column),
                split_ratio: split_ratio.unwrap_or(0.5),
                shuffle_blocks,
                seed: seed.unwrap_or(0),
                out,
                categorical: categorical.clone(),
                mean_model,
                save_models,
            };
            let data = csvio::read_csv(&input, &categorical)?;
            commands::predict::run(data, &args)
        }
        Command::Simulate {
            setting,
            config,
            mut method,
            mut alpha,
            mut epsilon,
            mut delta,
            mut block_size,
            mut propensity,
            mut n,
            mut train_n,
            mut trials,
            mut seed,
            out,
        } => {
            if let Some(path) = config {
                let map = config::read_config(&path)?;
                config::fill(&mut alpha, &map, "alpha")?;
                config::fill(&mut epsilon, &map, "epsilon")?;
                config::fill(&mut delta, &map, "delta")?;
                config::fill(&mut block_size, &map, "block-size")?;
                config::fill(&mut n, &map, "n")?;
                config::fill(&mut train_n, &map, "train-n")?;
                config::fill(&mut trials, &map, "trials")?;
                config::fill(&mut seed, &map, "seed")?;
                if method.is_none() {
                    if let Some(raw) = map.get("method") {
                        method = Some(
                            MethodName::from_str(raw, true)
                                .map_err(|e| anyhow::anyhow!("config key 'method': {e}"))?,
                        );
                    }
                }
                if propensity.is_none() {
                    if let Some(raw) = map.get("propensity") {
                        propensity = Some(
                            PropensityFlag::from_str(raw, true)
                                .map_err(|e| anyhow::anyhow!("config key 'propensity': {e}"))?,
                        );
                    }
                }
            }
            let args = commands::simulate::SimulateArgs {
                setting,
                method: method.unwrap_or(MethodName::ProCp),
                alpha: alpha.unwrap_or(0.2),
                epsilon: epsilon.unwrap_or(0.1),
                delta,
                block_size,
                propensity: propensity.unwrap_or(PropensityFlag::Known),
                n: n.unwrap_or(500),
                train_n: train_n.unwrap_or(500),
                trials: trials.unwrap_or(500),
                seed: seed.unwrap_or(0),
                out,
            };
            commands::simulate::run(&args)
        }
        Command::Diagnose {
            input,
            truth,
            estimate,
            alpha,
            epsilon,
            categorical,
            out,
        } => {
            let data = csvio::read_csv(&input, &categorical)?;
            commands::diagnose::run(
                data,
                &commands::diagnose::DiagnoseArgs {
                    input,
                    truth,
                    estimate,
                    alpha,
                    epsilon,
                    out,
                },
            )
        }
    }
}
