//! Synthetic data-generating mechanisms and their exact estimand truths.
//!
//! Two generators share one covariate bank. Under the first, exposures are
//! drawn jointly from a Dale model whose cross-ratio depends on shared
//! covariates, so the factorized propensity decomposition is false. Under the
//! second, each twin's exposure is an independent Bernoulli draw given own
//! covariates, so both decompositions hold. Outcomes are bivariate normal
//! around a linear mean with a within-pair covariance that differs by
//! zygosity. Because the generator's mean function is known, true potential
//! outcome means are computable without simulation error: every estimand
//! truth is an average over the covariate bank at forced exposures.

mod monte_carlo;

pub use monte_carlo::{
    run_monte_carlo, table3_recipes, table4_recipes, EstimatorRecipe, MisspecKnob,
    MonteCarloOptions, MonteCarloReport, MonteCarloRow,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dale::{joint_table, DaleError};
use crate::data::{DataError, PairedDataset, StackedRow, TwinPairRecord};
use crate::estimators::EstimandSpec;
use crate::regression::{
    resolve_basis, BasisSpec, ExposureOverride, FitError, ResolvedBasis, StackedData, Term,
};
use crate::rng::{stream, TAG_GENERATE};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("covariate bank is empty")]
    EmptyBank,
    #[error("covariate bank has no shared column `{0}`")]
    MissingSharedColumn(String),
    #[error("{model} generator: unsupported term `{term}`; generators take linear and interaction terms only")]
    UnsupportedTerm { model: &'static str, term: String },
    #[error("{model} generator: expected {expected} coefficients (intercept first), got {got}")]
    CoefficientCount {
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{model} generator may not reference `{name}`")]
    ForbiddenReference { model: &'static str, name: String },
    #[error("dgm1 draws exposures from a joint table and needs a cross-ratio generator")]
    MissingCrossRatio,
    #[error("dgm2 draws exposures independently; remove the cross-ratio generator")]
    UnexpectedCrossRatio,
    #[error("within-pair covariance {sigma} must lie in [0, {variance}) given noise variance {variance}")]
    InvalidCovariance { sigma: f64, variance: f64 },
    #[error("noise variance must be positive and finite, got {0}")]
    InvalidNoiseVariance(f64),
    #[error("a generator needs at least one pair per dataset")]
    ZeroPairs,
    #[error("a Monte Carlo run needs at least one replication")]
    ZeroReplications,
    #[error("a Monte Carlo run needs at least one estimator recipe")]
    NoRecipes,
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("estimator `{label}` failed on {failed} of {reps} replicates (cap {cap}%); last error: {last_error}")]
    TooManyFailures {
        label: String,
        failed: usize,
        reps: usize,
        cap: f64,
        last_error: String,
    },
    #[error("the {0} estimand is a conditional contrast with no marginal generator truth")]
    UnsupportedEstimand(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dale(#[from] DaleError),
}

/// Which exposure mechanism the generator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgmKind {
    /// Joint exposure table from per-twin margins and a shared-covariate
    /// cross-ratio; the factorized propensity model is false.
    Dgm1,
    /// Independent Bernoulli exposures given own covariates; both propensity
    /// decompositions hold.
    Dgm2,
}

/// A linear predictor with known coefficients: an implicit intercept followed
/// by one coefficient per term. Only linear and interaction terms are
/// allowed, so the design is data-independent and the truth is available in
/// closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub basis: BasisSpec,
    /// Intercept first, then one value per basis term.
    pub coefficients: Vec<f64>,
}

impl GeneratorModel {
    pub fn new(terms: Vec<Term>, coefficients: Vec<f64>) -> Self {
        Self {
            basis: BasisSpec::new(terms),
            coefficients,
        }
    }

    /// Checks the term kinds, the coefficient count, and that every
    /// referenced column is in `allowed`.
    fn validate(&self, model: &'static str, allowed: &[&str]) -> Result<(), SimulateError> {
        for term in &self.basis.terms {
            match term {
                Term::Linear(_) | Term::Interaction(_) => {}
                other => {
                    return Err(SimulateError::UnsupportedTerm {
                        model,
                        term: format!("{other:?}"),
                    })
                }
            }
        }
        let expected = 1 + self.basis.terms.len();
        if self.coefficients.len() != expected {
            return Err(SimulateError::CoefficientCount {
                model,
                expected,
                got: self.coefficients.len(),
            });
        }
        for name in self.basis.references() {
            if !allowed.contains(&name) {
                return Err(SimulateError::ForbiddenReference {
                    model,
                    name: name.to_string(),
                });
            }
        }
        Ok(())
    }

    fn resolve(&self, data: &StackedData) -> Result<ResolvedBasis, SimulateError> {
        Ok(resolve_basis(&self.basis, data)?)
    }
}

/// Evaluates a resolved generator basis on one stacked row.
fn eval_row(
    basis: &ResolvedBasis,
    coefficients: &[f64],
    row: &StackedRow,
    ov: ExposureOverride,
    buf: &mut Vec<f64>,
) -> f64 {
    basis.row_into(row, ov, buf);
    buf.iter().zip(coefficients).map(|(x, b)| x * b).sum()
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A complete data-generating mechanism: covariate bank, exposure models,
/// outcome model, and noise structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgmConfig {
    pub kind: DgmKind,
    /// Pairs per generated dataset.
    pub n_pairs: usize,
    /// Covariate population; generated datasets resample its pairs with
    /// replacement. Must carry a shared `zygosity` column (1 = MZ).
    pub covariate_bank: PairedDataset,
    /// Logistic model for a twin's own exposure margin over shared and own
    /// covariates.
    pub margin: GeneratorModel,
    /// Log cross-ratio model over shared covariates; required under
    /// [`DgmKind::Dgm1`], forbidden under [`DgmKind::Dgm2`].
    #[serde(default)]
    pub cross_ratio: Option<GeneratorModel>,
    /// Linear outcome mean over covariates and both exposures.
    pub outcome: GeneratorModel,
    /// Marginal variance of each twin's outcome noise.
    pub noise_variance: f64,
    /// Within-pair noise covariance for monozygotic pairs.
    pub sigma_mz: f64,
    /// Within-pair noise covariance for dizygotic pairs.
    pub sigma_dz: f64,
    pub seed: u64,
}

impl DgmConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.n_pairs == 0 {
            return Err(SimulateError::ZeroPairs);
        }
        if self.covariate_bank.is_empty() {
            return Err(SimulateError::EmptyBank);
        }
        let c_names = self.covariate_bank.c_names();
        let x_names = self.covariate_bank.x_names();
        if !c_names.iter().any(|n| n == "zygosity") {
            return Err(SimulateError::MissingSharedColumn("zygosity".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(SimulateError::InvalidNoiseVariance(self.noise_variance));
        }
        for sigma in [self.sigma_mz, self.sigma_dz] {
            if !(sigma.is_finite() && (0.0..self.noise_variance).contains(&sigma)) {
                return Err(SimulateError::InvalidCovariance {
                    sigma,
                    variance: self.noise_variance,
                });
            }
        }

        let shared: Vec<&str> = c_names.iter().map(String::as_str).collect();
        let mut own = shared.clone();
        own.extend(x_names.iter().map(String::as_str));
        let cotwin: Vec<String> = x_names.iter().map(|n| format!("co_{n}")).collect();
        let mut full = own.clone();
        full.extend(cotwin.iter().map(String::as_str));
        full.extend(["a_own", "a_cotwin"]);

        self.margin.validate("margin", &own)?;
        self.outcome.validate("outcome", &full)?;
        match (self.kind, &self.cross_ratio) {
            (DgmKind::Dgm1, Some(model)) => model.validate("cross-ratio", &shared)?,
            (DgmKind::Dgm1, None) => return Err(SimulateError::MissingCrossRatio),
            (DgmKind::Dgm2, Some(_)) => return Err(SimulateError::UnexpectedCrossRatio),
            (DgmKind::Dgm2, None) => {}
        }
        Ok(())
    }

    /// Name-only stacked view of the bank's columns, enough to resolve
    /// generator bases (they contain no data-dependent terms).
    fn name_space(&self) -> StackedData {
        StackedData {
            c_names: self.covariate_bank.c_names().to_vec(),
            x_names: self.covariate_bank.x_names().to_vec(),
            rows: Vec::new(),
        }
    }

    fn zygosity_column(&self) -> usize {
        self.covariate_bank
            .c_names()
            .iter()
            .position(|n| n == "zygosity")
            .expect("validated")
    }
}

/// Mirror-image stacked rows for one pair's covariates; exposures and
/// outcome are placeholders until drawn.
fn pair_rows(pair_index: usize, pair_id: &str, c: &[f64], x1: &[f64], x2: &[f64]) -> [StackedRow; 2] {
    let base = StackedRow {
        pair_index,
        pair_id: pair_id.to_string(),
        own: 1,
        c: c.to_vec(),
        x_own: x1.to_vec(),
        x_cotwin: x2.to_vec(),
        a_own: 0,
        a_cotwin: 0,
        y_own: 0.0,
    };
    let mut mirror = base.clone();
    mirror.own = 2;
    mirror.x_own = x2.to_vec();
    mirror.x_cotwin = x1.to_vec();
    [base, mirror]
}

/// Draws one dataset from the mechanism.
///
/// The draw order is fixed: all bank indices first, then per pair the
/// exposure variates (one uniform under Dgm1, two under Dgm2) followed by
/// three standard normals for the outcome noise. Everything comes from the
/// stream keyed by `(seed, TAG_GENERATE, replicate)`, so a given
/// `(config, replicate)` yields a bit-identical dataset regardless of what
/// else has run.
pub fn generate(config: &DgmConfig, replicate: u64) -> Result<PairedDataset, SimulateError> {
    config.validate()?;
    let mut rng = stream(config.seed, &[TAG_GENERATE, replicate]);
    let bank = &config.covariate_bank;
    let indices: Vec<usize> = (0..config.n_pairs)
        .map(|_| rng.gen_range(0..bank.len()))
        .collect();

    let names = config.name_space();
    let margin = config.margin.resolve(&names)?;
    let cross = config
        .cross_ratio
        .as_ref()
        .map(|m| m.resolve(&names))
        .transpose()?;
    let outcome = config.outcome.resolve(&names)?;
    let zyg = config.zygosity_column();

    let idio_mz = (config.noise_variance - config.sigma_mz).sqrt();
    let idio_dz = (config.noise_variance - config.sigma_dz).sqrt();
    let mut buf = Vec::new();
    let mut records = Vec::with_capacity(config.n_pairs);
    for (k, &i) in indices.iter().enumerate() {
        let src = &bank.records()[i];
        let pair_id = format!("r{replicate}_p{k:05}");
        let [mut row1, mut row2] = pair_rows(k, &pair_id, &src.c, &src.x1, &src.x2);

        let no_ov = ExposureOverride::default();
        let p1 = expit(eval_row(&margin, &config.margin.coefficients, &row1, no_ov, &mut buf));
        let p2 = expit(eval_row(&margin, &config.margin.coefficients, &row2, no_ov, &mut buf));
        let (a1, a2) = match config.kind {
            DgmKind::Dgm1 => {
                let model = config.cross_ratio.as_ref().expect("validated");
                let resolved = cross.as_ref().expect("validated");
                let psi = eval_row(resolved, &model.coefficients, &row1, no_ov, &mut buf).exp();
                let table = joint_table(1.0 - p1, 1.0 - p2, psi)?;
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                let mut cell = (1u8, 1u8);
                'outer: for a1 in 0..2u8 {
                    for a2 in 0..2u8 {
                        cum += table[a1 as usize][a2 as usize];
                        if u < cum {
                            cell = (a1, a2);
                            break 'outer;
                        }
                    }
                }
                cell
            }
            DgmKind::Dgm2 => {
                let u1: f64 = rng.gen();
                let u2: f64 = rng.gen();
                (u8::from(u1 < p1), u8::from(u2 < p2))
            }
        };

        row1.a_own = a1;
        row1.a_cotwin = a2;
        row2.a_own = a2;
        row2.a_cotwin = a1;
        let m1 = eval_row(&outcome, &config.outcome.coefficients, &row1, no_ov, &mut buf);
        let m2 = eval_row(&outcome, &config.outcome.coefficients, &row2, no_ov, &mut buf);

        let (sigma, idio) = if src.c[zyg] == 1.0 {
            (config.sigma_mz, idio_mz)
        } else {
            (config.sigma_dz, idio_dz)
        };
        let g0: f64 = rng.sample(StandardNormal);
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let shared_sd = sigma.sqrt();

        records.push(TwinPairRecord {
            pair_id,
            c: src.c.clone(),
            x1: src.x1.clone(),
            x2: src.x2.clone(),
            a1,
            a2,
            y1: m1 + shared_sd * g0 + idio * g1,
            y2: m2 + shared_sd * g0 + idio * g2,
        });
    }
    Ok(PairedDataset::new(
        bank.c_names().to_vec(),
        bank.x_names().to_vec(),
        records,
    )?)
}

/// Exact mean potential outcome under forced exposures `(a, b)`: the average
/// of the generator's outcome mean over both twins of every bank pair. No
/// simulation error, because resampling with replacement draws pairs from the
/// bank's empirical distribution and the noise has mean zero.
fn mean_po_truth(
    config: &DgmConfig,
    outcome: &ResolvedBasis,
    a: u8,
    b: u8,
) -> f64 {
    let ov = ExposureOverride::pattern(a, b);
    let mut buf = Vec::new();
    let stacked = StackedData::from_dataset(&config.covariate_bank);
    let total: f64 = stacked
        .rows
        .iter()
        .map(|row| eval_row(outcome, &config.outcome.coefficients, row, ov, &mut buf))
        .sum();
    total / stacked.rows.len() as f64
}

/// The estimand's true value under the mechanism.
pub fn true_value(config: &DgmConfig, estimand: EstimandSpec) -> Result<f64, SimulateError> {
    config.validate()?;
    let outcome = config.outcome.resolve(&config.name_space())?;
    let mean = |a, b| mean_po_truth(config, &outcome, a, b);
    match estimand {
        EstimandSpec::MeanPo { a, b } => Ok(mean(a, b)),
        EstimandSpec::Spillover => Ok(mean(0, 0) - mean(0, 1)),
        EstimandSpec::Main => Ok(mean(0, 0) - mean(1, 0)),
        EstimandSpec::Ctc => Err(SimulateError::UnsupportedEstimand(estimand.to_string())),
    }
}

/// Margin generator shared by both default mechanisms.
fn default_margin() -> GeneratorModel {
    GeneratorModel::new(
        vec![
            Term::linear("externalizing"),
            Term::linear("conflict"),
            Term::linear("motivation"),
            Term::linear("par_alcohol"),
            Term::interaction(&["par_alcohol", "conflict"]),
            Term::interaction(&["motivation", "motivation"]),
        ],
        vec![-0.4, 0.35, 0.3, -0.3, 0.3, 0.2, 0.15],
    )
}

/// Outcome generator shared by both default mechanisms. The co-twin exposure
/// terms put the spillover effect near -1.5 and the own-exposure terms put
/// the main effect near -2.1.
fn default_outcome() -> GeneratorModel {
    GeneratorModel::new(
        vec![
            Term::linear("par_alcohol"),
            Term::linear("par_drug"),
            Term::interaction(&["par_alcohol", "par_drug"]),
            Term::linear("occupation"),
            Term::linear("sex"),
            Term::linear("zygosity"),
            Term::linear("motivation"),
            Term::interaction(&["sex", "motivation"]),
            Term::linear("externalizing"),
            Term::linear("conflict"),
            Term::interaction(&["conflict", "conflict"]),
            Term::linear("age"),
            Term::linear("a_own"),
            Term::interaction(&["a_own", "par_alcohol"]),
            Term::interaction(&["a_own", "sex"]),
            Term::linear("a_cotwin"),
            Term::interaction(&["a_cotwin", "zygosity"]),
            Term::interaction(&["a_own", "a_cotwin"]),
        ],
        vec![
            10.5, 0.8, 0.5, 0.3, 0.4, 0.5, -0.3, -0.6, 0.3, 0.5, 0.4, 0.3, 0.2, 2.0, 0.3, 0.2,
            1.3, 0.3, 0.4,
        ],
    )
}

/// Default mechanism with dependent exposures: margins as in
/// [`default_dgm2`] plus a log cross-ratio of `0.8 + 0.7 zygosity + 0.3 sex`,
/// so MZ pairs are more exposure-concordant than DZ pairs.
pub fn default_dgm1(covariate_bank: PairedDataset, seed: u64) -> DgmConfig {
    DgmConfig {
        kind: DgmKind::Dgm1,
        n_pairs: 500,
        covariate_bank,
        margin: default_margin(),
        cross_ratio: Some(GeneratorModel::new(
            vec![Term::linear("zygosity"), Term::linear("sex")],
            vec![0.8, 0.7, 0.3],
        )),
        outcome: default_outcome(),
        noise_variance: 8.0,
        sigma_mz: 3.5,
        sigma_dz: 1.0,
        seed,
    }
}

/// Default mechanism with independent exposures given own covariates.
pub fn default_dgm2(covariate_bank: PairedDataset, seed: u64) -> DgmConfig {
    DgmConfig {
        kind: DgmKind::Dgm2,
        n_pairs: 500,
        covariate_bank,
        margin: default_margin(),
        cross_ratio: None,
        outcome: default_outcome(),
        noise_variance: 8.0,
        sigma_mz: 3.5,
        sigma_dz: 1.0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::generate_covariate_bank;
    use approx::assert_abs_diff_eq;

    fn small_bank() -> PairedDataset {
        generate_covariate_bank(200, 11)
    }

    #[test]
    fn same_seed_and_replicate_give_a_bit_identical_dataset() {
        let config = default_dgm1(small_bank(), 7);
        let a = generate(&config, 3).unwrap();
        let b = generate(&config, 3).unwrap();
        assert_eq!(a, b);
        let c = generate(&config, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spillover_truth_is_the_exact_cotwin_coefficient_for_a_linear_outcome() {
        let mut config = default_dgm2(small_bank(), 7);
        config.outcome = GeneratorModel::new(vec![Term::linear("a_cotwin")], vec![2.0, 1.5]);
        let spill = true_value(&config, EstimandSpec::Spillover).unwrap();
        assert_eq!(spill, -1.5);
        let main = true_value(&config, EstimandSpec::Main).unwrap();
        assert_eq!(main, 0.0);
        assert_eq!(
            true_value(&config, EstimandSpec::MeanPo { a: 0, b: 0 }).unwrap(),
            2.0
        );
    }

    #[test]
    fn zero_exposure_coefficients_make_all_potential_outcome_means_equal() {
        let mut config = default_dgm2(small_bank(), 7);
        config.outcome = GeneratorModel::new(
            vec![Term::linear("par_alcohol"), Term::linear("motivation")],
            vec![3.0, 0.5, -0.2],
        );
        let base = true_value(&config, EstimandSpec::MeanPo { a: 0, b: 0 }).unwrap();
        for (a, b) in [(0, 1), (1, 0), (1, 1)] {
            let other = true_value(&config, EstimandSpec::MeanPo { a, b }).unwrap();
            assert_abs_diff_eq!(base, other, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(
            true_value(&config, EstimandSpec::Spillover).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn ctc_estimand_has_no_generator_truth() {
        let config = default_dgm2(small_bank(), 7);
        let err = true_value(&config, EstimandSpec::Ctc).unwrap_err();
        assert!(matches!(err, SimulateError::UnsupportedEstimand(_)));
    }

    #[test]
    fn dgm2_exposures_are_independent_within_covariate_strata() {
        // Margins over the two binary shared covariates only, so stratifying
        // on (sex, zygosity) conditions on everything the margins use and
        // the within-stratum odds ratio isolates residual dependence.
        let mut config = default_dgm2(generate_covariate_bank(2000, 5), 19);
        config.n_pairs = 100_000;
        config.margin = GeneratorModel::new(
            vec![Term::linear("sex"), Term::linear("zygosity")],
            vec![-0.3, 0.5, 0.4],
        );
        let ds = generate(&config, 0).unwrap();

        let sex = ds.c_names().iter().position(|n| n == "sex").unwrap();
        let zyg = ds.c_names().iter().position(|n| n == "zygosity").unwrap();
        let mut strata = std::collections::HashMap::new();
        for r in ds.records() {
            let key = (r.c[sex] as i64, r.c[zyg] as i64);
            let cells = strata.entry(key).or_insert([[0u64; 2]; 2]);
            cells[r.a1 as usize][r.a2 as usize] += 1;
        }
        assert_eq!(strata.len(), 4);
        let mut log_or = 0.0;
        let mut inv_var = 0.0;
        for cells in strata.values() {
            let [[n00, n01], [n10, n11]] = cells.map(|row| row.map(|n| n as f64));
            let w = 1.0 / (1.0 / n00 + 1.0 / n01 + 1.0 / n10 + 1.0 / n11);
            log_or += w * ((n00 * n11) / (n01 * n10)).ln();
            inv_var += w;
        }
        let pooled = log_or / inv_var;
        let se = inv_var.sqrt().recip();
        assert!(
            pooled.abs() < 3.0 * se,
            "pooled conditional log OR {pooled:.4} exceeds 3 x SE {se:.4}"
        );
    }

    #[test]
    fn dgm1_makes_mz_pairs_more_exposure_concordant_than_dz_pairs() {
        let mut config = default_dgm1(generate_covariate_bank(2000, 5), 23);
        config.n_pairs = 60_000;
        let ds = generate(&config, 0).unwrap();
        let zyg = ds.c_names().iter().position(|n| n == "zygosity").unwrap();
        let mut tables = [[[0u64; 2]; 2]; 2];
        for r in ds.records() {
            tables[r.c[zyg] as usize][r.a1 as usize][r.a2 as usize] += 1;
        }
        let or = |t: [[u64; 2]; 2]| {
            let [[n00, n01], [n10, n11]] = t.map(|row| row.map(|n| n as f64));
            (n00 * n11) / (n01 * n10)
        };
        let dz = or(tables[0]);
        let mz = or(tables[1]);
        assert!(
            mz > dz && dz > 1.0,
            "expected MZ concordance above DZ above 1, got MZ {mz:.3}, DZ {dz:.3}"
        );
    }

    #[test]
    fn truth_matches_a_brute_force_average_of_forced_exposure_outcomes() {
        let config = default_dgm1(generate_covariate_bank(1000, 5), 29);
        for (a, b) in [(0u8, 0u8), (0, 1), (1, 0)] {
            let truth = true_value(&config, EstimandSpec::MeanPo { a, b }).unwrap();

            // Independent simulation: resample bank pairs and add noise with
            // the exposure pattern forced, bypassing generate()'s exposure
            // mechanism entirely.
            let mut rng = stream(97, &[a as u64, b as u64]);
            let names = config.name_space();
            let outcome = config.outcome.resolve(&names).unwrap();
            let zyg = config.zygosity_column();
            let mut buf = Vec::new();
            let n = 400_000usize;
            let mut total = 0.0;
            let mut totalsq = 0.0;
            let bank = &config.covariate_bank;
            for _ in 0..n {
                let src = &bank.records()[rng.gen_range(0..bank.len())];
                let [row1, row2] = pair_rows(0, "f", &src.c, &src.x1, &src.x2);
                let ov = ExposureOverride::pattern(a, b);
                let m1 = eval_row(&outcome, &config.outcome.coefficients, &row1, ov, &mut buf);
                let m2 = eval_row(&outcome, &config.outcome.coefficients, &row2, ov, &mut buf);
                let sigma = if src.c[zyg] == 1.0 {
                    config.sigma_mz
                } else {
                    config.sigma_dz
                };
                let g0: f64 = rng.sample(StandardNormal);
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                let idio = (config.noise_variance - sigma).sqrt();
                let y1 = m1 + sigma.sqrt() * g0 + idio * g1;
                let y2 = m2 + sigma.sqrt() * g0 + idio * g2;
                let avg = 0.5 * (y1 + y2);
                total += avg;
                totalsq += avg * avg;
            }
            let mean = total / n as f64;
            let var = totalsq / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - truth).abs() < 3.0 * se,
                "pattern ({a},{b}): simulated {mean:.5} vs truth {truth:.5}, 3 x SE {:.5}",
                3.0 * se
            );
        }
    }

    #[test]
    fn default_effects_sit_near_the_calibrated_targets() {
        let config = default_dgm1(generate_covariate_bank(4000, 5), 7);
        let spill = true_value(&config, EstimandSpec::Spillover).unwrap();
        let main = true_value(&config, EstimandSpec::Main).unwrap();
        assert!((-1.6..=-1.4).contains(&spill), "spillover {spill}");
        assert!((-2.25..=-1.95).contains(&main), "main {main}");
    }

    #[test]
    fn config_validation_rejects_malformed_mechanisms() {
        let bank = small_bank();
        let mut config = default_dgm1(bank.clone(), 7);
        config.n_pairs = 0;
        assert!(matches!(
            config.validate(),
            Err(SimulateError::ZeroPairs)
        ));

        let mut config = default_dgm1(bank.clone(), 7);
        config.cross_ratio = None;
        assert!(matches!(
            config.validate(),
            Err(SimulateError::MissingCrossRatio)
        ));

        let mut config = default_dgm2(bank.clone(), 7);
        config.cross_ratio = Some(GeneratorModel::new(vec![], vec![0.0]));
        assert!(matches!(
            config.validate(),
            Err(SimulateError::UnexpectedCrossRatio)
        ));

        let mut config = default_dgm2(bank.clone(), 7);
        config.sigma_mz = 9.0;
        assert!(matches!(
            config.validate(),
            Err(SimulateError::InvalidCovariance { .. })
        ));

        let mut config = default_dgm2(bank.clone(), 7);
        config.margin = GeneratorModel::new(vec![Term::linear("a_own")], vec![0.0, 1.0]);
        assert!(matches!(
            config.validate(),
            Err(SimulateError::ForbiddenReference { model: "margin", .. })
        ));

        let mut config = default_dgm2(bank.clone(), 7);
        config.outcome = GeneratorModel::new(vec![Term::linear("y_own")], vec![0.0, 1.0]);
        assert!(matches!(
            config.validate(),
            Err(SimulateError::ForbiddenReference { model: "outcome", .. })
        ));

        let mut config = default_dgm2(bank.clone(), 7);
        config.outcome = GeneratorModel::new(
            vec![Term::spline("motivation")],
            vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        );
        assert!(matches!(
            config.validate(),
            Err(SimulateError::UnsupportedTerm { .. })
        ));

        let mut config = default_dgm2(bank, 7);
        config.outcome = GeneratorModel::new(vec![Term::linear("motivation")], vec![0.0]);
        assert!(matches!(
            config.validate(),
            Err(SimulateError::CoefficientCount { .. })
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = default_dgm1(small_bank(), 7);
        let json = serde_json::to_string(&config).unwrap();
        let back: DgmConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn generated_outcomes_reflect_zygosity_dependent_noise_correlation() {
        let mut config = default_dgm2(generate_covariate_bank(2000, 5), 31);
        config.n_pairs = 40_000;
        // Constant outcome mean isolates the noise: the within-pair outcome
        // covariance should estimate sigma_mz and sigma_dz directly.
        config.outcome = GeneratorModel::new(vec![], vec![0.0]);
        let ds = generate(&config, 0).unwrap();
        let zyg = ds.c_names().iter().position(|n| n == "zygosity").unwrap();
        for (code, expected) in [(1.0, config.sigma_mz), (0.0, config.sigma_dz)] {
            let pairs: Vec<_> = ds.records().iter().filter(|r| r.c[zyg] == code).collect();
            let n = pairs.len() as f64;
            let mean1 = pairs.iter().map(|r| r.y1).sum::<f64>() / n;
            let mean2 = pairs.iter().map(|r| r.y2).sum::<f64>() / n;
            let cov = pairs
                .iter()
                .map(|r| (r.y1 - mean1) * (r.y2 - mean2))
                .sum::<f64>()
                / n;
            assert!(
                (cov - expected).abs() < 0.25,
                "zygosity {code}: covariance {cov:.3} vs sigma {expected}"
            );
        }
    }
}
