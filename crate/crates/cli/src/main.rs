use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use earmark_cli::config::{ExperimentConfig, Head};
use earmark_cli::run::{
    cmd_attribute, cmd_evaluate, cmd_report, cmd_sweep, cmd_synth, cmd_train, RunPaths,
};
use earmark_core::attrib::Method;
use earmark_core::error::Result;

/// Temporal attribution testbed: synthesize scenes, train classifiers,
/// attribute waveforms, and score temporal detection.
#[derive(Parser)]
#[command(name = "earmark", version, disable_help_subcommand = true)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the global seed (reseeds the dataset and training).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset into the run directory.
    Synth,
    /// Train one head (clip, fw-ws, or fw-ss) on the dataset.
    Train {
        #[arg(long)]
        head: Head,
    },
    /// Dump attribution maps for the val and test splits.
    Attribute {
        /// Restrict to one method; default: every method in the config.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        /// Override the path step count for integrated gradients.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sweep percentile thresholds on the validation split.
    Sweep,
    /// Score the test split and write the report tables.
    Evaluate {
        /// Force one fixed percentile for every method.
        #[arg(long)]
        tau: Option<u8>,
    },
    /// Print an existing report as text tables.
    Report,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| {
        earmark_core::Error::InvalidInput("--config is required for this command".into())
    })?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let run = RunPaths::new(cfg.out_dir.clone());
    match cli.command {
        Command::Synth => {
            cmd_synth(&cfg, &run)?;
        }
        Command::Train { head } => {
            cmd_train(&cfg, &run, head)?;
        }
        Command::Attribute { method, steps } => {
            let methods: Vec<Method> = match method {
                Some(m) => vec![m],
                None => cfg.attribution.methods.clone(),
            };
            cmd_attribute(&cfg, &run, &methods, steps.unwrap_or(cfg.attribution.steps))?;
        }
        Command::Sweep => {
            cmd_sweep(&cfg, &run)?;
        }
        Command::Evaluate { tau } => {
            cmd_evaluate(&cfg, &run, tau)?;
        }
        Command::Report => {
            print!("{}", cmd_report(&run)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Usage problems exit 1; clap's default of 2 is reserved for
            // data errors here.
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
