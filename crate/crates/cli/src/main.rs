use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nfula_cli::commands::{self, CertifyArgs, DiagnoseArgs, VerifyArgs};
use nfula_cli::config::ExperimentConfig;
use nfula_cli::CliError;

#[derive(Parser)]
#[command(
    name = "nfula",
    version,
    about = "Normalizing-flow priors and projected Langevin sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an observation from a ground truth; writes x_true.nft, y.nft and operator.txt.
    Degrade(ConfigArgs),
    /// Train a flow on a dataset or toy generator; writes an NFCK checkpoint and loss.csv.
    TrainFlow {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from the checkpoint's optimizer state.
        #[arg(long)]
        resume: bool,
        /// Stop after this many further epochs.
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Run the Langevin sampler; writes mean.nft, std.nft, trace.csv and chain/.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides `sampler.chains`.
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Structural Lipschitz certification plus an empirical Hessian bound.
    Certify(CertifyArgs),
    /// ACF, PSNR and W1 diagnostics of a stored chain.
    Diagnose(DiagnoseArgs),
    /// Self-contained theory checks; nonzero exit on any failure.
    Verify(VerifyArgs),
}

fn load_config(a: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    let mut pairs: Vec<(Option<usize>, String, String)> = Vec::new();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // Validate the file alone first so line numbers refer to it.
        ExperimentConfig::parse(&text)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some((k, v)) = line.split_once('=') {
                pairs.push((Some(i + 1), k.trim().into(), v.trim().into()));
            }
        }
    }
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        pairs.push((None, k.trim().into(), v.trim().into()));
    }
    if let Some(seed) = a.seed {
        pairs.push((None, "seed".into(), seed.to_string()));
    }
    Ok(ExperimentConfig::from_pairs(
        pairs.iter().map(|(l, k, v)| (*l, k.as_str(), v.as_str())),
    )?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    nfula_cli::init_threads()?;
    match cli.command {
        Command::Degrade(a) => commands::degrade(&load_config(&a)?),
        Command::TrainFlow {
            cfg,
            resume,
            max_epochs,
        } => commands::train_flow(&load_config(&cfg)?, resume, max_epochs),
        Command::Sample { cfg, chains } => {
            let mut c = load_config(&cfg)?;
            if let Some(n) = chains {
                c.chains = n;
            }
            commands::sample(&c)
        }
        Command::Certify(a) => commands::certify(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Verify(a) => commands::verify(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
