use clap::{Parser, Subcommand};
use pairfx_cli::{estimate, gen_data, simulate, verify};

#[derive(Parser)]
#[command(
    name = "pairfx",
    version,
    about = "Doubly robust estimation of main and spillover effects in twin pairs."
)]
struct Cli {
    /// Worker threads for bootstrap and Monte Carlo loops (0 = all cores).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate effects on a dataset and render a stratified report.
    Estimate(estimate::EstimateArgs),
    /// Run a Monte Carlo study from a generator configuration.
    Simulate(simulate::SimulateArgs),
    /// Replay the oracle identity checks on the fixture worlds.
    Verify(verify::VerifyArgs),
    /// Write synthetic datasets, schemas, and generator configurations.
    GenData(gen_data::GenDataArgs),
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Estimate(args) => estimate::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Verify(args) => verify::run(args),
        Command::GenData(args) => gen_data::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
