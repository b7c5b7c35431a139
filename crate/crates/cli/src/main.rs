use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedsim_cli::commands::{cmd_estimate_entropy, cmd_partition, cmd_run, cmd_summarize, cmd_validate_assumption};
use fedsim_cli::config::Overrides;
use fedsim_cli::exit_code;
use fedsim_core::selector::SelectorKind;

/// Federated learning simulator with heterogeneity-guided client selection.
#[derive(Parser)]
#[command(name = "fedsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Seed to run; repeat for several. Replaces the config's seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// hics, random, pow_d, clustered_sampling or div_fl.
    #[arg(long)]
    selector: Option<SelectorKind>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seeds: self.seeds.clone(),
            selector: self.selector,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation and write metrics CSVs and manifests.
    Run(Common),
    /// Write the client partition and per-client label entropy.
    Partition(Common),
    /// Compare estimated and true label entropy after warm-up.
    EstimateEntropy(Common),
    /// Write the entropy/gradient-gap scatter and its fitted envelope.
    ValidateAssumption(Common),
    /// Rounds to a target accuracy and speedup over random selection.
    Summarize {
        /// Metrics CSVs written by `fedsim run`.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        target_acc: f64,
        /// Directory for summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(&c.config, &c.overrides()).map(drop),
        Command::Partition(c) => cmd_partition(&c.config, &c.overrides()).map(drop),
        Command::EstimateEntropy(c) => cmd_estimate_entropy(&c.config, &c.overrides()).map(drop),
        Command::ValidateAssumption(c) => cmd_validate_assumption(&c.config, &c.overrides()).map(drop),
        Command::Summarize { files, target_acc, out } => cmd_summarize(files, *target_acc, out.as_deref()).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedsim: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
