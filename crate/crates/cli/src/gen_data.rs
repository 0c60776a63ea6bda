//! The `gen-data` subcommand: write the synthetic covariate bank, column
//! schema, and built-in generator configurations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pairfx_core::{
    bank_schema, default_dgm1, default_dgm2, generate, generate_covariate_bank, PairedDataset,
};

/// Built-in exposure and outcome generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DgmChoice {
    /// Covariates only; exposures and outcomes stay zero.
    None,
    /// Dale-coupled joint exposures.
    Dgm1,
    /// Conditionally independent exposures.
    Dgm2,
}

#[derive(clap::Args)]
pub struct GenDataArgs {
    /// Number of twin pairs in the output dataset.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,

    /// Size of the covariate bank the pairs are drawn from (default: same
    /// as --pairs).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    bank_pairs: Option<u64>,

    /// Master seed (falls back to PAIRFX_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Attach exposures and outcomes from a built-in generator.
    #[arg(long, value_enum, default_value_t = DgmChoice::None)]
    dgm: DgmChoice,

    /// Replicate index for the generator draw.
    #[arg(long, default_value_t = 0)]
    replicate: u64,

    /// Write the dataset CSV here.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,

    /// Write the column schema JSON here.
    #[arg(long, value_name = "PATH")]
    schema_out: Option<PathBuf>,

    /// Write the generator configuration JSON here (requires --dgm).
    #[arg(long, value_name = "PATH")]
    dgm_out: Option<PathBuf>,
}

pub fn run(args: GenDataArgs) -> anyhow::Result<i32> {
    let seed = crate::resolve_seed(args.seed)?.unwrap_or(0);
    let bank_pairs = args.bank_pairs.unwrap_or(args.pairs);
    let bank = generate_covariate_bank(bank_pairs as usize, seed);
    let dataset = match args.dgm {
        DgmChoice::None => {
            if args.dgm_out.is_some() {
                anyhow::bail!("--dgm-out requires --dgm dgm1 or --dgm dgm2");
            }
            bank
        }
        DgmChoice::Dgm1 | DgmChoice::Dgm2 => {
            let mut config = match args.dgm {
                DgmChoice::Dgm1 => default_dgm1(bank, seed),
                _ => default_dgm2(bank, seed),
            };
            config.n_pairs = args.pairs as usize;
            if let Some(path) = &args.dgm_out {
                let json = serde_json::to_string_pretty(&config)?;
                fs::write(path, format!("{json}\n"))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            generate(&config, args.replicate)?
        }
    };
    write_csv(&args.out, &dataset)?;
    if let Some(path) = &args.schema_out {
        let json = serde_json::to_string_pretty(&bank_schema())?;
        fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn write_csv(path: &Path, ds: &PairedDataset) -> anyhow::Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = vec!["pair_id".to_string()];
    header.extend(ds.c_names().iter().cloned());
    header.extend(ds.x_names().iter().map(|n| format!("x1_{n}")));
    header.extend(ds.x_names().iter().map(|n| format!("x2_{n}")));
    header.extend(["a1", "a2", "y1", "y2"].map(String::from));
    writer.write_record(&header)?;
    for r in ds.records() {
        let mut row: Vec<String> = vec![r.pair_id.clone()];
        row.extend(r.c.iter().map(f64::to_string));
        row.extend(r.x1.iter().map(f64::to_string));
        row.extend(r.x2.iter().map(f64::to_string));
        row.push(r.a1.to_string());
        row.push(r.a2.to_string());
        row.push(r.y1.to_string());
        row.push(r.y2.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
