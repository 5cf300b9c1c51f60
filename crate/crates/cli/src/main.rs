use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landau_cli::{commands, report, CliResult, ExperimentConfig, Options};

#[derive(Parser)]
#[command(name = "landau", version, about = "Particle and limit-equation experiments for the Landau equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config, or a manifest.json to re-execute
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides sim.seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-replica statistics along particle trajectories
    Simulate(Common),
    /// Finite-volume solve of the limit density
    Solve(Common),
    /// Law-of-large-numbers functional over an N sweep
    SweepLln(Common),
    /// Marginal distances to the limit density over an N sweep
    SweepChaos(Common),
    /// Empirical moments against their a-priori bound (exit 4 on violation)
    VerifyMoments(Common),
    /// SVG plots and a summary from written tables
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn setup(c: &Common) -> CliResult<(ExperimentConfig, Options)> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.sim.seed = seed;
    }
    Ok((cfg, Options { out: c.out.clone(), workers: c.workers }))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Report { inputs, out } => report::cmd_report(&inputs, &out).map(|_| ()),
        Command::Simulate(c) => setup(&c).and_then(|(cfg, o)| commands::cmd_simulate(&cfg, &o)).map(|_| ()),
        Command::Solve(c) => setup(&c).and_then(|(cfg, o)| commands::cmd_solve(&cfg, &o)).map(|_| ()),
        Command::SweepLln(c) => setup(&c).and_then(|(cfg, o)| commands::cmd_sweep_lln(&cfg, &o)).map(|_| ()),
        Command::SweepChaos(c) => setup(&c).and_then(|(cfg, o)| commands::cmd_sweep_chaos(&cfg, &o)).map(|_| ()),
        Command::VerifyMoments(c) => setup(&c).and_then(|(cfg, o)| commands::cmd_verify_moments(&cfg, &o)).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("landau: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
