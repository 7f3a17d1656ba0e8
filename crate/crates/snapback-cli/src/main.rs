//! snapback: forensic detection of AI-generated imagery from diffusion
//! reconstruction trajectories.
//!
//! Exit codes: 0 success, 2 backend or configuration failure, 3 missing or
//! malformed input artifact.

mod backend;
mod commands;
mod config;
mod report;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CmdError;
use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "snapback", version, about = "Diffusion snap-back image forensics")]
struct Cli {
    /// TOML pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the reconstruction backend id
    /// (mock-smooth, mock-abrupt, mock-labelwise, sd-v1.5).
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Override the run output directory (replaces output_root/run_name).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct every manifest image at each strength and write the
    /// feature table.
    Extract {
        /// Manifest CSV with header `file_name,label`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory manifest paths are resolved against.
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Cross-validate, pick the operating threshold, fit the final model,
    /// and evaluate the holdout split.
    Train {
        /// Feature CSV (defaults to <run>/features.csv).
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Score a feature table with an existing model bundle.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Raw-pixel logistic regression control through the same pipeline.
    Baseline {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Cross-validated AUROC for feature subsets.
    Ablate {
        #[arg(long)]
        features: Option<PathBuf>,
        /// File with one comma-separated feature subset per line.
        #[arg(long)]
        subsets: Option<PathBuf>,
    },
    /// Re-extract under augmentations and score with the trained bundle.
    Robustness {
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Comma-separated subset of: raw, jpeg60, webp60, blur, noise,
        /// screenshot.
        #[arg(long)]
        conditions: Option<String>,
    },
    /// Render figures and companion tables from run artifacts.
    Report,
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig, CmdError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|err| CmdError { code: 2, err })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(backend) = &cli.backend {
        cfg.backend = backend.clone();
    }
    if let Some(out) = &cli.out {
        cfg.output_root = out.clone();
        cfg.run_name = String::new();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let mut cfg = effective_config(cli)?;
    match &cli.command {
        Command::Extract { manifest, data_root } => {
            if let Some(m) = manifest {
                cfg.manifest = Some(m.clone());
            }
            if let Some(d) = data_root {
                cfg.data_root = Some(d.clone());
            }
            commands::cmd_extract(&cfg)
        }
        Command::Train { features } => commands::cmd_train(&cfg, features.as_deref()),
        Command::Eval { bundle, features } => commands::cmd_eval(&cfg, bundle, features.as_deref()),
        Command::Baseline { manifest, data_root } => {
            if let Some(m) = manifest {
                cfg.manifest = Some(m.clone());
            }
            if let Some(d) = data_root {
                cfg.data_root = Some(d.clone());
            }
            commands::cmd_baseline(&cfg)
        }
        Command::Ablate { features, subsets } => {
            commands::cmd_ablate(&cfg, features.as_deref(), subsets.as_deref())
        }
        Command::Robustness { bundle, conditions } => {
            commands::cmd_robustness(&cfg, bundle.as_deref(), conditions.as_deref())
        }
        Command::Report => report::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}
