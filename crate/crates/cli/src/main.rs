use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use onset_cli::{CliError, RunConfig};
use onset_core::models::Arch;

#[derive(Parser)]
#[command(
    name = "onset",
    version,
    about = "Disease-onset prediction from longitudinal lab tests"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the fully deterministic mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort.
    Generate,
    /// Filter, normalize, window and split the cohort into example sets.
    Prepare,
    /// Train models and write checkpoints.
    Train {
        /// Architectures to train (lr, lstm, cnn1, cnn2); defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        arch: Vec<Arch>,
    },
    /// Score the test split and write the AUC report.
    Evaluate {
        /// Checkpoints to score; defaults to those of the configured models.
        checkpoints: Vec<PathBuf>,
        /// Print AUCs with full precision instead of 3 decimals.
        #[arg(long)]
        full_precision: bool,
    },
    /// List the heaviest baseline features per disease.
    ReportFeatures {
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        top: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate => {
            let dir = onset_cli::generate(&cfg)?;
            println!("{}", dir.display());
        }
        Command::Prepare => {
            for c in onset_cli::prepare(&cfg)? {
                println!(
                    "{}: {} patients, {} examples",
                    c.split, c.patients, c.examples
                );
            }
        }
        Command::Train { arch } => {
            for t in onset_cli::train(&cfg, &arch)? {
                match t {
                    onset_cli::commands::Trained::Network { arch, fit } => {
                        let best = fit.best_epoch.map(|e| &fit.history[e - 1]);
                        match best {
                            Some(r) => println!(
                                "{arch}: best epoch {} with mean validation AUC {:.4}",
                                r.epoch, r.mean_val_auc
                            ),
                            None => println!("{arch}: no epochs run"),
                        }
                    }
                    onset_cli::commands::Trained::Baseline(m) => {
                        let fitted = m.fits().iter().filter(|f| f.is_some()).count();
                        println!("lr: {fitted} of {} diseases fitted", m.diseases().len());
                    }
                }
            }
        }
        Command::Evaluate {
            checkpoints,
            full_precision,
        } => {
            let report = onset_cli::evaluate(&cfg, &checkpoints, full_precision)?;
            print!("{}", report.to_csv(full_precision)?);
        }
        Command::ReportFeatures { checkpoint, top } => {
            let path = onset_cli::report_features(&cfg, checkpoint.as_deref(), top)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
