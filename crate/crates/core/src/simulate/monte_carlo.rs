//! Replicated evaluation of estimator recipes against a known mechanism.
//!
//! Each replicate generates a fresh dataset, fits one analysis pipeline per
//! distinct misspecification knob, and scores every recipe's point estimate,
//! influence-function variance, and interval coverage against the exact
//! generator truth. Replicates run in parallel on per-replicate RNG streams,
//! and the aggregation is order-insensitive, so a report is a pure function
//! of the configuration and the master seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{EstimandSpec, ModelKind};
use crate::inference::{bootstrap_ci, wald_ci, BootstrapPlan};
use crate::pipeline::{AnalysisPipeline, ModelConfig};
use crate::regression::{BasisSpec, Term};
use crate::rng::{stream, TAG_BOOTSTRAP};
use crate::simulate::{generate, true_value, DgmConfig, SimulateError};

/// Fraction of replicates an estimator row may lose before the run aborts.
const FAILURE_CAP: f64 = 0.05;

/// Propensity clipping bound used by Monte Carlo fits. Tail covariate draws
/// can push a fitted joint cell near zero; the bound caps the resulting
/// weight at 1000 without touching moderate probabilities.
const MC_CLIP: f64 = 1e-3;

/// Which nuisance models a recipe deliberately misspecifies. A wrong model
/// keeps the intercept and one linear term, dropping every other term; knobs
/// shape fitting recipes only and are never consulted by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MisspecKnob {
    pub wrong_propensity: bool,
    pub wrong_outcome: bool,
}

impl MisspecKnob {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn wrong_propensity() -> Self {
        Self {
            wrong_propensity: true,
            wrong_outcome: false,
        }
    }

    pub fn wrong_outcome() -> Self {
        Self {
            wrong_propensity: false,
            wrong_outcome: true,
        }
    }

    pub fn wrong_both() -> Self {
        Self {
            wrong_propensity: true,
            wrong_outcome: true,
        }
    }

    fn suffix(self) -> &'static str {
        match (self.wrong_propensity, self.wrong_outcome) {
            (false, false) => "",
            (true, false) => " wr.prop",
            (false, true) => " wr.outc",
            (true, true) => " wr.both",
        }
    }
}

/// One estimator row of a Monte Carlo report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorRecipe {
    pub label: String,
    pub model: ModelKind,
    pub knob: MisspecKnob,
}

impl EstimatorRecipe {
    pub fn new(model: ModelKind, knob: MisspecKnob) -> Self {
        Self {
            label: format!("{model}{}", knob.suffix()),
            model,
            knob,
        }
    }
}

/// The five estimator rows reported for the dependent-exposure mechanism:
/// both correctly specified efficient estimators, then the joint-propensity
/// estimator under each misspecification.
pub fn table3_recipes() -> Vec<EstimatorRecipe> {
    vec![
        EstimatorRecipe::new(ModelKind::M1, MisspecKnob::none()),
        EstimatorRecipe::new(ModelKind::M2, MisspecKnob::none()),
        EstimatorRecipe::new(ModelKind::M1, MisspecKnob::wrong_propensity()),
        EstimatorRecipe::new(ModelKind::M1, MisspecKnob::wrong_outcome()),
        EstimatorRecipe::new(ModelKind::M1, MisspecKnob::wrong_both()),
    ]
}

/// The five rows for the independent-exposure mechanism: both correct
/// estimators, then the factorized estimator under each misspecification.
pub fn table4_recipes() -> Vec<EstimatorRecipe> {
    vec![
        EstimatorRecipe::new(ModelKind::M1, MisspecKnob::none()),
        EstimatorRecipe::new(ModelKind::M2, MisspecKnob::none()),
        EstimatorRecipe::new(ModelKind::M2, MisspecKnob::wrong_propensity()),
        EstimatorRecipe::new(ModelKind::M2, MisspecKnob::wrong_outcome()),
        EstimatorRecipe::new(ModelKind::M2, MisspecKnob::wrong_both()),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub replications: usize,
    pub estimand: EstimandSpec,
    /// Confidence level scored for coverage.
    pub level: f64,
    /// Per-replicate percentile bootstrap; `None` skips the bootstrap
    /// columns.
    pub bootstrap: Option<BootstrapPlan>,
}

impl MonteCarloOptions {
    pub fn new(replications: usize, estimand: EstimandSpec) -> Self {
        Self {
            replications,
            estimand,
            level: 0.95,
            bootstrap: None,
        }
    }

    pub fn with_bootstrap(mut self, plan: BootstrapPlan) -> Self {
        self.bootstrap = Some(plan);
        self
    }
}

/// Aggregated performance of one recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRow {
    pub label: String,
    pub model: ModelKind,
    pub knob: MisspecKnob,
    /// Mean point estimate minus the truth.
    pub bias: f64,
    /// Sample variance of the point estimates across replicates.
    pub variance: f64,
    /// Mean influence-function variance estimate.
    pub mean_if_variance: f64,
    /// Percent of Wald intervals covering the truth.
    pub wald_coverage: f64,
    /// Mean bootstrap variance estimate, when a bootstrap plan was set.
    pub mean_bootstrap_variance: Option<f64>,
    /// Percent of percentile-bootstrap intervals covering the truth.
    pub bootstrap_coverage: Option<f64>,
    /// Replicates dropped for this row (estimation or bootstrap failure).
    pub n_failed: usize,
}

/// A full Monte Carlo study: the truth that was scored against and one row
/// per recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub estimand: EstimandSpec,
    pub truth: f64,
    pub truth_method: String,
    pub replications: usize,
    pub level: f64,
    pub bootstrap: Option<BootstrapPlan>,
    pub rows: Vec<MonteCarloRow>,
}

impl MonteCarloReport {
    /// Renders the report as an aligned text table.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "estimand: {}   truth: {:.3}   replications: {}   level: {:.3}\n",
            self.estimand, self.truth, self.replications, self.level
        );
        let headers = [
            "estimator",
            "Bias",
            "Var",
            "IF-Var Est",
            "Wald Cov'g",
            "Btstp-Var Est",
            "Btstp Cov'g",
            "failed",
        ];
        let mut grid: Vec<[String; 8]> = vec![headers.map(String::from)];
        let cell = |v: Option<f64>| match v {
            Some(v) => format!("{v:.3}"),
            None => "-".to_string(),
        };
        for row in &self.rows {
            grid.push([
                row.label.clone(),
                format!("{:.3}", row.bias),
                format!("{:.3}", row.variance),
                format!("{:.3}", row.mean_if_variance),
                format!("{:.3}", row.wald_coverage),
                cell(row.mean_bootstrap_variance),
                cell(row.bootstrap_coverage),
                row.n_failed.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..headers.len())
            .map(|j| grid.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        for row in &grid {
            let mut line = String::new();
            for (j, value) in row.iter().enumerate() {
                if j == 0 {
                    line.push_str(&format!("{value:<width$}", width = widths[0]));
                } else {
                    line.push_str(&format!("  {value:>width$}", width = widths[j]));
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// First linear covariate term of a generator basis, if any: the surviving
/// regressor of a deliberately impoverished model.
fn first_linear_covariate(spec: &BasisSpec) -> Option<Term> {
    spec.terms.iter().find_map(|t| match t {
        Term::Linear(name) if name != "a_own" && name != "a_cotwin" => {
            Some(Term::Linear(name.clone()))
        }
        _ => None,
    })
}

/// Rewrites own-covariate references to their co-twin columns, leaving
/// shared names alone. Turns an own-exposure margin basis into the matching
/// co-twin propensity basis.
fn mirror_basis(spec: &BasisSpec, x_names: &[String]) -> BasisSpec {
    let mirror = |name: &str| {
        if x_names.iter().any(|x| x == name) {
            format!("co_{name}")
        } else {
            name.to_string()
        }
    };
    let terms = spec
        .terms
        .iter()
        .map(|t| match t {
            Term::Linear(name) => Term::Linear(mirror(name)),
            Term::Interaction(names) => {
                Term::Interaction(names.iter().map(|n| mirror(n)).collect())
            }
            other => other.clone(),
        })
        .collect();
    BasisSpec::new(terms)
}

/// Builds the fitting configuration a knob implies for this mechanism.
///
/// Correct recipes reuse the generator bases themselves (mirrored for the
/// co-twin propensity, referenced shared columns for the cross-ratio), so
/// the fitted families contain the truth. Wrong recipes collapse a model to
/// its intercept plus one linear term: the first linear covariate of the
/// correct basis, with the exposure main effects retained in a wrong outcome
/// model so the estimand stays formally defined.
fn knob_config(config: &DgmConfig, knob: MisspecKnob) -> ModelConfig {
    let x_names = config.covariate_bank.x_names();

    let outcome = if knob.wrong_outcome {
        let mut terms = vec![Term::linear("a_own"), Term::linear("a_cotwin")];
        terms.extend(first_linear_covariate(&config.outcome.basis));
        BasisSpec::new(terms)
    } else {
        config.outcome.basis.clone()
    };

    let (propensity_own, cross_ratio_terms) = if knob.wrong_propensity {
        let terms: Vec<Term> = first_linear_covariate(&config.margin.basis)
            .into_iter()
            .collect();
        (BasisSpec::new(terms), Vec::new())
    } else {
        let cross = config
            .cross_ratio
            .as_ref()
            .map(|m| {
                let mut names: Vec<String> = Vec::new();
                for term in &m.basis.terms {
                    let refs: Vec<&str> = match term {
                        Term::Linear(n) => vec![n.as_str()],
                        Term::Interaction(ns) => ns.iter().map(String::as_str).collect(),
                        _ => Vec::new(),
                    };
                    for name in refs {
                        if !names.iter().any(|n| n == name) {
                            names.push(name.to_string());
                        }
                    }
                }
                names
            })
            .unwrap_or_default();
        (config.margin.basis.clone(), cross)
    };
    let propensity_cotwin = mirror_basis(&propensity_own, x_names);

    ModelConfig {
        outcome_m1: outcome.clone(),
        outcome_m2: outcome,
        propensity_own,
        propensity_cotwin,
        cross_ratio_terms,
        ctc_terms: BasisSpec::empty(),
        clip_epsilon: MC_CLIP,
    }
}

/// One recipe's successful scores on one replicate.
struct RepCell {
    point: f64,
    if_variance: f64,
    wald_hit: bool,
    boot_variance: Option<f64>,
    boot_hit: Option<bool>,
}

fn run_replicate(
    config: &DgmConfig,
    recipes: &[EstimatorRecipe],
    knob_configs: &[(MisspecKnob, ModelConfig)],
    options: &MonteCarloOptions,
    truth: f64,
    replicate: u64,
) -> Result<Vec<Result<RepCell, String>>, SimulateError> {
    let ds = generate(config, replicate)?;
    let plan = options.bootstrap.map(|plan| BootstrapPlan {
        reps: plan.reps,
        seed: stream(plan.seed, &[TAG_BOOTSTRAP, replicate]).gen(),
    });

    let pipelines: Vec<Result<AnalysisPipeline, String>> = knob_configs
        .iter()
        .map(|(_, mc)| AnalysisPipeline::fit(&ds, mc).map_err(|e| e.to_string()))
        .collect();

    let cells = recipes
        .iter()
        .map(|recipe| {
            let slot = knob_configs
                .iter()
                .position(|(k, _)| *k == recipe.knob)
                .expect("every recipe knob has a config");
            let pipeline = pipelines[slot].as_ref().map_err(Clone::clone)?;
            let est = pipeline
                .estimate(recipe.model, options.estimand)
                .map_err(|e| e.to_string())?;
            let ifs = est
                .if_values
                .as_ref()
                .ok_or_else(|| "estimator returned no influence values".to_string())?;
            let n = ifs.len() as f64;
            let if_variance = ifs.iter().map(|v| v * v).sum::<f64>() / (n * n);
            let wald = wald_ci(&est, options.level).map_err(|e| e.to_string())?;
            let (boot_variance, boot_hit) = match plan {
                Some(plan) => {
                    let estimator = crate::pipeline::point_estimator(
                        knob_configs[slot].1.clone(),
                        recipe.model,
                        options.estimand,
                    );
                    let ci = bootstrap_ci(&ds, &estimator, &plan, options.level)
                        .map_err(|e| e.to_string())?;
                    (
                        ci.se.map(|se| se * se),
                        Some(ci.lower <= truth && truth <= ci.upper),
                    )
                }
                None => (None, None),
            };
            Ok(RepCell {
                point: est.point,
                if_variance,
                wald_hit: wald.lower <= truth && truth <= wald.upper,
                boot_variance,
                boot_hit,
            })
        })
        .collect();
    Ok(cells)
}

/// Runs the full study: `options.replications` generated datasets, every
/// recipe fit and scored on each, aggregated against the exact truth.
///
/// A recipe's failed replicates are dropped from its aggregates up to a 5%
/// cap, beyond which the run errors. The report is deterministic given the
/// configuration, recipes, and options, independent of thread count.
pub fn run_monte_carlo(
    config: &DgmConfig,
    recipes: &[EstimatorRecipe],
    options: &MonteCarloOptions,
) -> Result<MonteCarloReport, SimulateError> {
    config.validate()?;
    if options.replications == 0 {
        return Err(SimulateError::ZeroReplications);
    }
    if recipes.is_empty() {
        return Err(SimulateError::NoRecipes);
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(SimulateError::InvalidLevel(options.level));
    }
    let truth = true_value(config, options.estimand)?;

    let mut knob_configs: Vec<(MisspecKnob, ModelConfig)> = Vec::new();
    for recipe in recipes {
        if !knob_configs.iter().any(|(k, _)| *k == recipe.knob) {
            knob_configs.push((recipe.knob, knob_config(config, recipe.knob)));
        }
    }

    let replicate_cells: Vec<Vec<Result<RepCell, String>>> = (0..options.replications as u64)
        .into_par_iter()
        .map(|r| run_replicate(config, recipes, &knob_configs, options, truth, r))
        .collect::<Result<_, _>>()?;

    let reps = options.replications;
    let mut rows = Vec::with_capacity(recipes.len());
    for (j, recipe) in recipes.iter().enumerate() {
        let mut points = Vec::with_capacity(reps);
        let mut if_vars = Vec::with_capacity(reps);
        let mut wald_hits = 0usize;
        let mut boot_vars = Vec::new();
        let mut boot_scored = 0usize;
        let mut boot_hits = 0usize;
        let mut last_error = String::new();
        for cells in &replicate_cells {
            match &cells[j] {
                Ok(cell) => {
                    points.push(cell.point);
                    if_vars.push(cell.if_variance);
                    wald_hits += usize::from(cell.wald_hit);
                    if let Some(v) = cell.boot_variance {
                        boot_vars.push(v);
                    }
                    if let Some(hit) = cell.boot_hit {
                        boot_scored += 1;
                        boot_hits += usize::from(hit);
                    }
                }
                Err(message) => last_error = message.clone(),
            }
        }
        let kept = points.len();
        let failed = reps - kept;
        if failed as f64 > FAILURE_CAP * reps as f64 {
            return Err(SimulateError::TooManyFailures {
                label: recipe.label.clone(),
                failed,
                reps,
                cap: FAILURE_CAP * 100.0,
                last_error,
            });
        }
        let m = kept as f64;
        let mean = points.iter().sum::<f64>() / m;
        let variance = if kept > 1 {
            points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        rows.push(MonteCarloRow {
            label: recipe.label.clone(),
            model: recipe.model,
            knob: recipe.knob,
            bias: mean - truth,
            variance,
            mean_if_variance: if_vars.iter().sum::<f64>() / m,
            wald_coverage: 100.0 * wald_hits as f64 / m,
            mean_bootstrap_variance: if boot_vars.is_empty() {
                None
            } else {
                Some(boot_vars.iter().sum::<f64>() / boot_vars.len() as f64)
            },
            bootstrap_coverage: options
                .bootstrap
                .map(|_| 100.0 * boot_hits as f64 / boot_scored.max(1) as f64),
            n_failed: failed,
        });
    }

    Ok(MonteCarloReport {
        estimand: options.estimand,
        truth,
        truth_method:
            "average of the generator outcome mean over the covariate bank at forced exposures"
                .to_string(),
        replications: reps,
        level: options.level,
        bootstrap: options.bootstrap,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::generate_covariate_bank;
    use crate::simulate::{default_dgm1, default_dgm2};

    fn quick_config() -> DgmConfig {
        let mut config = default_dgm2(generate_covariate_bank(300, 11), 13);
        config.n_pairs = 200;
        config
    }

    #[test]
    fn reports_are_bit_identical_across_runs() {
        let config = quick_config();
        let options = MonteCarloOptions::new(8, EstimandSpec::Spillover)
            .with_bootstrap(BootstrapPlan { reps: 20, seed: 5 });
        let recipes = [
            EstimatorRecipe::new(ModelKind::M2, MisspecKnob::none()),
            EstimatorRecipe::new(ModelKind::M2, MisspecKnob::wrong_outcome()),
        ];
        let a = run_monte_carlo(&config, &recipes, &options).unwrap();
        let b = run_monte_carlo(&config, &recipes, &options).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn single_replicate_report_is_degenerate() {
        let config = quick_config();
        let options = MonteCarloOptions::new(1, EstimandSpec::Spillover)
            .with_bootstrap(BootstrapPlan { reps: 1, seed: 5 });
        let recipes = [EstimatorRecipe::new(ModelKind::M2, MisspecKnob::none())];
        let report = run_monte_carlo(&config, &recipes, &options).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.variance, 0.0);
        assert!(row.wald_coverage == 0.0 || row.wald_coverage == 100.0);
        let boot = row.bootstrap_coverage.unwrap();
        assert!(boot == 0.0 || boot == 100.0);
        // A single bootstrap replicate has no spread to estimate.
        assert_eq!(row.mean_bootstrap_variance, None);
        assert_eq!(row.n_failed, 0);
    }

    #[test]
    fn knobs_change_fits_but_never_the_generated_data() {
        let config = quick_config();
        let knobs = [
            MisspecKnob::none(),
            MisspecKnob::wrong_propensity(),
            MisspecKnob::wrong_outcome(),
            MisspecKnob::wrong_both(),
        ];
        let baseline = generate(&config, 0).unwrap();
        for knob in knobs {
            // The generator takes no knob anywhere in its inputs; regenerate
            // after building each knob's fitting configuration to show the
            // config derivation leaves the stream untouched.
            let mc = knob_config(&config, knob);
            assert!(mc.validate(
                config.covariate_bank.c_names(),
                config.covariate_bank.x_names()
            )
            .is_ok());
            assert_eq!(generate(&config, 0).unwrap(), baseline);
        }
    }

    #[test]
    fn misspecified_bases_are_genuinely_impoverished() {
        let config = default_dgm1(generate_covariate_bank(50, 11), 13);
        let wrong = knob_config(&config, MisspecKnob::wrong_both());
        assert_eq!(
            wrong.outcome_m1.terms,
            vec![
                Term::linear("a_own"),
                Term::linear("a_cotwin"),
                Term::linear("par_alcohol"),
            ]
        );
        assert_eq!(wrong.propensity_own.terms, vec![Term::linear("externalizing")]);
        assert_eq!(
            wrong.propensity_cotwin.terms,
            vec![Term::linear("co_externalizing")]
        );
        assert!(wrong.cross_ratio_terms.is_empty());

        let correct = knob_config(&config, MisspecKnob::none());
        assert_eq!(correct.outcome_m1, config.outcome.basis);
        assert_eq!(correct.propensity_own, config.margin.basis);
        assert_eq!(
            correct.cross_ratio_terms,
            vec!["zygosity".to_string(), "sex".to_string()]
        );
        // The co-twin propensity mirrors the margin basis onto co_ columns.
        assert!(correct
            .propensity_cotwin
            .references()
            .iter()
            .any(|n| *n == "co_externalizing"));
        assert!(correct
            .propensity_cotwin
            .references()
            .iter()
            .all(|n| *n != "externalizing" && *n != "motivation"));
    }

    #[test]
    fn zero_replications_and_empty_recipes_are_rejected() {
        let config = quick_config();
        let recipes = table4_recipes();
        let err = run_monte_carlo(
            &config,
            &recipes,
            &MonteCarloOptions::new(0, EstimandSpec::Spillover),
        )
        .unwrap_err();
        assert!(matches!(err, SimulateError::ZeroReplications));
        let err = run_monte_carlo(
            &config,
            &[],
            &MonteCarloOptions::new(4, EstimandSpec::Spillover),
        )
        .unwrap_err();
        assert!(matches!(err, SimulateError::NoRecipes));
        let mut options = MonteCarloOptions::new(4, EstimandSpec::Spillover);
        options.level = 1.0;
        let err = run_monte_carlo(&config, &recipes, &options).unwrap_err();
        assert!(matches!(err, SimulateError::InvalidLevel(_)));
    }

    #[test]
    fn preset_recipes_match_the_reported_row_structure() {
        let t3: Vec<_> = table3_recipes().iter().map(|r| r.label.clone()).collect();
        assert_eq!(t3, ["m1", "m2", "m1 wr.prop", "m1 wr.outc", "m1 wr.both"]);
        let t4: Vec<_> = table4_recipes().iter().map(|r| r.label.clone()).collect();
        assert_eq!(t4, ["m1", "m2", "m2 wr.prop", "m2 wr.outc", "m2 wr.both"]);
    }

    #[test]
    fn text_table_lists_every_recipe_with_the_table_columns() {
        let config = quick_config();
        let options = MonteCarloOptions::new(4, EstimandSpec::Spillover);
        let report = run_monte_carlo(&config, &table4_recipes(), &options).unwrap();
        let text = report.to_text();
        for header in ["Bias", "Var", "IF-Var Est", "Wald Cov'g", "Btstp-Var Est", "Btstp Cov'g"] {
            assert!(text.contains(header), "missing column {header} in:\n{text}");
        }
        for row in ["m1", "m2 wr.prop", "m2 wr.outc", "m2 wr.both"] {
            assert!(text.contains(row), "missing row {row} in:\n{text}");
        }
        // No bootstrap plan: those columns render as dashes.
        assert!(text.contains('-'));
        let json = serde_json::to_string(&report).unwrap();
        let back: MonteCarloReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn correct_recipes_concentrate_around_the_truth() {
        let mut config = default_dgm2(generate_covariate_bank(500, 11), 37);
        config.n_pairs = 400;
        let options = MonteCarloOptions::new(40, EstimandSpec::Spillover);
        let recipes = [
            EstimatorRecipe::new(ModelKind::M1, MisspecKnob::none()),
            EstimatorRecipe::new(ModelKind::M2, MisspecKnob::none()),
        ];
        let report = run_monte_carlo(&config, &recipes, &options).unwrap();
        for row in &report.rows {
            let budget = 4.0 * (row.variance / 40.0).sqrt();
            assert!(
                row.bias.abs() < budget,
                "{}: |bias| {:.4} over budget {budget:.4}",
                row.label,
                row.bias.abs()
            );
            assert!(row.wald_coverage > 70.0, "{} coverage", row.label);
        }
    }
}
