//! The `simulate` subcommand: run a Monte Carlo study from a generator
//! configuration and render its operating characteristics.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use pairfx_core::{
    run_monte_carlo, table3_recipes, table4_recipes, BootstrapPlan, DgmConfig, DgmKind,
    EstimandSpec, MonteCarloOptions,
};

use crate::estimate::parse_estimand;

/// Which estimator rows to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Correct m1 and m2 rows plus the three misspecified m1 rows.
    Table3,
    /// Correct m1 and m2 rows plus the three misspecified m2 rows.
    Table4,
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    /// Generator configuration JSON.
    #[arg(long, value_name = "JSON")]
    config: PathBuf,

    /// Monte Carlo replications.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,

    /// Estimator rows to run (default: table3 for dgm1, table4 for dgm2).
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// Target estimand.
    #[arg(long, value_parser = parse_estimand, default_value = "spillover")]
    estimand: EstimandSpec,

    /// Bootstrap replicates per Monte Carlo draw (0 skips the bootstrap
    /// columns).
    #[arg(long, default_value_t = 200)]
    boot_reps: u64,

    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Overrides the seed stored in the configuration (PAIRFX_SEED applies
    /// when the flag is absent).
    #[arg(long)]
    seed: Option<u64>,

    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Print JSON to stdout instead of the text table.
    #[arg(long)]
    json: bool,
}

pub fn run(args: SimulateArgs) -> anyhow::Result<i32> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: DgmConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = crate::resolve_seed(args.seed)? {
        config.seed = seed;
    }
    let preset = args.preset.unwrap_or(match config.kind {
        DgmKind::Dgm1 => Preset::Table3,
        DgmKind::Dgm2 => Preset::Table4,
    });
    let recipes = match preset {
        Preset::Table3 => table3_recipes(),
        Preset::Table4 => table4_recipes(),
    };

    let mut options = MonteCarloOptions::new(args.reps as usize, args.estimand);
    options.level = args.level;
    if args.boot_reps > 0 {
        options = options.with_bootstrap(BootstrapPlan {
            reps: args.boot_reps as usize,
            seed: config.seed,
        });
    }

    let report = run_monte_carlo(&config, &recipes, &options)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.out {
        fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        println!("{json}");
    } else {
        print!("{}", report.to_text());
    }
    Ok(0)
}
