//! The `estimate` subcommand: fit nuisances on a CSV dataset and report
//! effect estimates for the whole sample and the MZ/DZ strata.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use pairfx_core::rng::{derive_seed, TAG_BOOTSTRAP};
use pairfx_core::{
    bootstrap_ci, load_dataset, point_estimator, subset_by_zygosity, wald_ci, AnalysisPipeline,
    BootstrapPlan, EstimandSpec, ModelConfig, ModelKind, PairedDataset, SchemaSpec, Zygosity,
};

use crate::report::{render_text, AnalysisReport, CiChoice, EstimateCell, StratumReport};

/// Which doubly robust estimators to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelChoice {
    M1,
    M2,
    Both,
}

impl ModelChoice {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::M1 => vec![ModelKind::M1],
            ModelChoice::M2 => vec![ModelKind::M2],
            ModelChoice::Both => vec![ModelKind::M1, ModelKind::M2],
        }
    }
}

/// Clap-compatible wrapper around [`EstimandSpec::parse`].
pub fn parse_estimand(s: &str) -> Result<EstimandSpec, String> {
    EstimandSpec::parse(s).map_err(|e| e.to_string())
}

#[derive(clap::Args)]
pub struct EstimateArgs {
    /// CSV dataset in wide pair format.
    #[arg(long, value_name = "CSV")]
    data: PathBuf,

    /// Column schema JSON.
    #[arg(long, value_name = "JSON")]
    schema: PathBuf,

    /// Nuisance model configuration JSON (default: linear in every column).
    #[arg(long, value_name = "JSON")]
    model_config: Option<PathBuf>,

    /// Estimators to run.
    #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
    model: ModelChoice,

    /// Estimand, repeatable: mean:a,b, spillover, main, or ctc.
    /// Defaults to spillover, main, and ctc.
    #[arg(long = "estimand", value_parser = parse_estimand)]
    estimands: Vec<EstimandSpec>,

    /// Skip the MZ and DZ subgroup rows.
    #[arg(long)]
    no_subgroups: bool,

    /// Confidence intervals to attach (the ctc cell is bootstrap-only).
    #[arg(long, value_enum, default_value_t = CiChoice::Wald)]
    ci: CiChoice,

    /// Bootstrap replicates per interval.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    boot_reps: u64,

    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Base seed for bootstrap resampling (falls back to PAIRFX_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Write the JSON report here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Print JSON to stdout instead of the text table.
    #[arg(long)]
    json: bool,
}

fn model_tag(model: ModelKind) -> u64 {
    match model {
        ModelKind::Plugin => 0,
        ModelKind::M1 => 1,
        ModelKind::M2 => 2,
        ModelKind::Ctc => 3,
    }
}

pub fn run(args: EstimateArgs) -> anyhow::Result<i32> {
    let seed = crate::resolve_seed(args.seed)?.unwrap_or(0);
    let schema = SchemaSpec::from_json_file(&args.schema)?;
    let ds = load_dataset(&args.data, &schema)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let config = match &args.model_config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ModelConfig::from_json(&text)?
        }
        None => ModelConfig::default_linear(ds.c_names(), ds.x_names()),
    };
    let estimands = if args.estimands.is_empty() {
        vec![EstimandSpec::Spillover, EstimandSpec::Main, EstimandSpec::Ctc]
    } else {
        args.estimands.clone()
    };
    let models = args.model.kinds();

    let mut warnings = Vec::new();
    let mut inputs: Vec<(String, PairedDataset)> = vec![("All".to_string(), ds.clone())];
    if !args.no_subgroups {
        for z in [Zygosity::Mz, Zygosity::Dz] {
            match subset_by_zygosity(&ds, z) {
                Ok(sub) => inputs.push((z.label().to_string(), sub)),
                Err(e) => warnings.push(format!("{} stratum skipped: {e}", z.label())),
            }
        }
    }

    let mut strata = Vec::new();
    for (si, (label, sub)) in inputs.iter().enumerate() {
        let pipeline = AnalysisPipeline::fit(sub, &config)
            .with_context(|| format!("fitting the {label} stratum"))?;
        let mut cells = Vec::new();
        for (ei, &estimand) in estimands.iter().enumerate() {
            // The ctc estimand belongs to its own model, so it produces one
            // cell per stratum rather than one per estimator row.
            let cell_models = if estimand == EstimandSpec::Ctc {
                vec![ModelKind::Ctc]
            } else {
                models.clone()
            };
            for model in cell_models {
                let est = pipeline
                    .estimate(model, estimand)
                    .with_context(|| format!("{label}/{model}/{estimand}"))?;
                let wald = if args.ci.wald() && model != ModelKind::Ctc {
                    Some(wald_ci(&est, args.level)?)
                } else {
                    None
                };
                let bootstrap = if args.ci.bootstrap() {
                    let plan = BootstrapPlan {
                        reps: args.boot_reps as usize,
                        seed: derive_seed(
                            seed,
                            &[TAG_BOOTSTRAP, si as u64, ei as u64, model_tag(model)],
                        ),
                    };
                    let estimator = point_estimator(config.clone(), model, estimand);
                    Some(bootstrap_ci(sub, &estimator, &plan, args.level)?)
                } else {
                    None
                };
                cells.push(EstimateCell {
                    model,
                    estimand,
                    point: est.point,
                    wald,
                    bootstrap,
                    warnings: est.warnings,
                });
            }
        }
        strata.push(StratumReport {
            label: label.clone(),
            n_pairs: sub.len(),
            warnings: pipeline.fit_warnings(),
            cells,
        });
    }

    let report = AnalysisReport {
        models,
        estimands,
        ci: args.ci,
        level: args.level,
        boot_reps: args.boot_reps as usize,
        seed,
        warnings,
        strata,
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.out {
        fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        println!("{json}");
    } else {
        print!("{}", render_text(&report));
    }
    Ok(0)
}
