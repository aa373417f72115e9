//! `capcli` — build, verify, and measure hidden-node-free CSMA designs.
//!
//! Exit codes: 0 clean, 1 a check found violations, 2 configuration or I/O
//! error, 3 the random instance could not be built (percolation, association,
//! or schedule certification failed).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use capcli::commands::{self, Outcome};
use capcli::config::ExperimentConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "capcli",
    version,
    about = "Capacity toolkit for hidden-node-free CSMA networks"
)]
struct Cli {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Use exactly this seed (replaces the configured seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the configured one).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for the sweep (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a node placement and traffic pattern and write them as JSON.
    Gen,
    /// Audit the inclusion laws and certify the prescribed sensing ranges.
    Verify,
    /// Print the sensing range that makes the target model hidden-node-free.
    Hnf,
    /// Cross-check simulated CSMA against its exact stationary distribution.
    Throughput,
    /// Run the capacity-scaling sweep over (n, seed, mode).
    Sweep,
    /// Simulate idealized carrier sensing and check it stays in-family.
    Ipcs,
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    match cli.command {
        Command::Gen => commands::cmd_gen(&cfg),
        Command::Verify => commands::cmd_verify(&cfg),
        Command::Hnf => commands::cmd_hnf(&cfg),
        Command::Throughput => commands::cmd_throughput(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg, cli.jobs),
        Command::Ipcs => commands::cmd_ipcs(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome { violation: false }) => ExitCode::from(0),
        Ok(Outcome { violation: true }) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            let construction = err
                .downcast_ref::<capcore::Error>()
                .is_some_and(|e| e.is_construction_failure());
            ExitCode::from(if construction { 3 } else { 2 })
        }
    }
}
