use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anedl::cli::{self, RunConfig};
use anedl::Error;

#[derive(Parser)]
#[command(name = "anedl", version, about = "Adaptive negative evidential deep learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `paths.output` (or the dataset directory for `generate`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `train.top_o`.
    #[arg(long = "top-O")]
    top_o: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and its truth sidecar.
    Generate(Common),
    /// Train and write the per-epoch log and final checkpoint.
    Train(Common),
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of top evidence entries summed for the inlier score.
        #[arg(long = "M")]
        m: Option<usize>,
    },
    /// Evaluate a checkpoint for M in {1, K/4, K/2, K}; one JSON line per M.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the ablation grid over three seeds and write a CSV table.
    Ablate(Common),
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(o) = common.top_o {
        cfg.train.top_o = Some(o);
    }
    if let Some(out) = &common.out {
        cfg.paths.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output serializes")
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = load(&common)?;
            let dir = common.out.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
            let sizes = cli::cmd_generate(&cfg, &dir)?;
            println!("{}", json(&sizes));
        }
        Command::Train(common) => {
            let cfg = load(&common)?;
            let reports = cli::cmd_train(&cfg)?;
            if let Some(last) = reports.last() {
                println!("{}", json(last));
            }
        }
        Command::Eval { common, checkpoint, m } => {
            let cfg = load(&common)?;
            let summary = cli::cmd_eval(&cfg, &checkpoint, m)?;
            let text = serde_json::to_string_pretty(&summary).expect("output serializes");
            match &common.out {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
        }
        Command::Sweep { common, checkpoint } => {
            let cfg = load(&common)?;
            let lines: Vec<String> = cli::cmd_sweep(&cfg, &checkpoint)?.iter().map(json).collect();
            match &common.out {
                Some(path) => std::fs::write(path, lines.join("\n") + "\n")?,
                None => lines.iter().for_each(|l| println!("{l}")),
            }
        }
        Command::Ablate(common) => {
            let cfg = load(&common)?;
            for row in cli::cmd_ablate(&cfg)? {
                println!("{}", json(&row));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::NonFinite(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
