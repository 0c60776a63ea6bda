//! Doubly robust estimators of mean potential outcomes and their contrasts,
//! plus the classical co-twin-control between/within regression.
//!
//! For an exposure pattern `(a, b)` (own exposure `a`, co-twin exposure `b`)
//! the estimators average, over pairs, the per-pair summand
//!
//! ```text
//! s_i = (1/2) * sum_j [ 1{A_j = a, A_{3-j} = b} / p_ij * (Y_j - mu_ij) + mu_ij ]
//! ```
//!
//! where `mu_ij` is the fitted outcome mean under the forced pattern and
//! `p_ij` is a model of `P(A_j = a, A_{3-j} = b)` for twin `j`:
//!
//! * the plug-in estimator drops the weighted residual term entirely;
//! * Model 1 uses the joint exposure distribution from the Dale coupling;
//! * Model 2 factorizes it as the product of the twin's own propensity and
//!   the co-twin's exposure probability given the twin's own covariates.
//!
//! The estimate is consistent when either the outcome model or the
//! (factorized) propensity model is correct, and the centered summands
//! `s_i - mean(s)` are the estimated influence values used for Wald
//! intervals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dale::{DaleError, JointPropensity};
use crate::data::PairedDataset;
use crate::regression::{
    build_design, mgs_select, resolve_basis, BasisSpec, ExposureOverride, FitError, FitOptions,
    NuisanceFit, PropensityClipConfig, StackedData, Term,
};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("exposure pattern ({0}, {1}) must be binary")]
    PatternOutOfRange(u8, u8),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("joint propensity covers {joint} pairs but the dataset has {data}")]
    LengthMismatch { joint: usize, data: usize },
    #[error(
        "pair `{pair_id}` twin {twin} has nonpositive fitted propensity {value} \
         for its observed pattern; enable clipping or repair the propensity model"
    )]
    ZeroPropensity {
        pair_id: String,
        twin: u8,
        value: f64,
    },
    #[error("no discordant pairs: own and pair-mean exposures are collinear")]
    NoDiscordantPairs,
    #[error("column `{0}` was dropped as collinear from the between-within design")]
    Collinear(String),
    #[error("cannot parse estimand `{0}`; expected mean:A,B | spillover | main | ctc")]
    UnknownEstimand(String),
    #[error("contrast mixes estimates from different estimators")]
    MixedModels,
    #[error("contrast mixes estimates over different numbers of pairs")]
    ContrastLength,
    #[error("contrast needs at least one component")]
    EmptyContrast,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Dale(#[from] DaleError),
}

/// Which estimator produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Outcome-regression plug-in (no inverse weighting).
    Plugin,
    /// Doubly robust under the joint (Dale-coupled) propensity.
    M1,
    /// Doubly robust under the factorized propensity.
    M2,
    /// Co-twin-control between/within regression.
    Ctc,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Plugin => "plugin",
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::Ctc => "ctc",
        };
        f.write_str(s)
    }
}

/// What is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandSpec {
    /// `E[Y^{a,b}]`: mean outcome with own exposure forced to `a` and
    /// co-twin exposure forced to `b`.
    MeanPo { a: u8, b: u8 },
    /// `E[Y^{0,0}] - E[Y^{0,1}]`: effect of the co-twin's exposure on an
    /// unexposed twin.
    Spillover,
    /// `E[Y^{0,0}] - E[Y^{1,0}]`: effect of own exposure with an unexposed
    /// co-twin.
    Main,
    /// Within coefficient of the between/within regression.
    Ctc,
}

impl EstimandSpec {
    /// Parses `mean:A,B`, `spillover`, `main`, or `ctc`.
    pub fn parse(s: &str) -> Result<Self, EstimatorError> {
        let bad = || EstimatorError::UnknownEstimand(s.to_string());
        match s.trim() {
            "spillover" => Ok(Self::Spillover),
            "main" => Ok(Self::Main),
            "ctc" => Ok(Self::Ctc),
            other => {
                let rest = other.strip_prefix("mean:").ok_or_else(bad)?;
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                let a: u8 = a.trim().parse().map_err(|_| bad())?;
                let b: u8 = b.trim().parse().map_err(|_| bad())?;
                if a > 1 || b > 1 {
                    return Err(bad());
                }
                Ok(Self::MeanPo { a, b })
            }
        }
    }
}

impl std::fmt::Display for EstimandSpec {
    /// Writes the parseable form back out.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimandSpec::MeanPo { a, b } => write!(f, "mean:{a},{b}"),
            EstimandSpec::Spillover => f.write_str("spillover"),
            EstimandSpec::Main => f.write_str("main"),
            EstimandSpec::Ctc => f.write_str("ctc"),
        }
    }
}

/// A point estimate with per-pair influence values.
#[derive(Debug, Clone)]
pub struct EffectEstimate {
    pub model: ModelKind,
    pub estimand: EstimandSpec,
    pub point: f64,
    /// Centered per-pair influence values (mean zero by construction), when
    /// the estimator provides them.
    pub if_values: Option<Vec<f64>>,
    pub n_pairs: usize,
    pub warnings: Vec<String>,
}

fn check_pattern(a: u8, b: u8) -> Result<(), EstimatorError> {
    if a > 1 || b > 1 {
        return Err(EstimatorError::PatternOutOfRange(a, b));
    }
    Ok(())
}

fn finish(
    model: ModelKind,
    estimand: EstimandSpec,
    s: Vec<f64>,
    warnings: Vec<String>,
) -> EffectEstimate {
    let n = s.len();
    let point = s.iter().sum::<f64>() / n as f64;
    let if_values = s.into_iter().map(|v| v - point).collect();
    EffectEstimate {
        model,
        estimand,
        point,
        if_values: Some(if_values),
        n_pairs: n,
        warnings,
    }
}

/// Counterfactual outcome predictions under the forced pattern, stacked as
/// `[pair 0 twin 1, pair 0 twin 2, pair 1 twin 1, ...]`.
fn forced_means(
    ds: &PairedDataset,
    outcome: &NuisanceFit,
    a: u8,
    b: u8,
) -> Result<Vec<f64>, EstimatorError> {
    let data = StackedData::from_dataset(ds);
    Ok(outcome.predict(&data, ExposureOverride::pattern(a, b))?)
}

/// Outcome-regression plug-in estimate of `E[Y^{a,b}]`.
pub fn estimate_plugin(
    ds: &PairedDataset,
    outcome: &NuisanceFit,
    a: u8,
    b: u8,
) -> Result<EffectEstimate, EstimatorError> {
    check_pattern(a, b)?;
    if ds.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mu = forced_means(ds, outcome, a, b)?;
    let s = (0..ds.len())
        .map(|i| 0.5 * (mu[2 * i] + mu[2 * i + 1]))
        .collect();
    Ok(finish(
        ModelKind::Plugin,
        EstimandSpec::MeanPo { a, b },
        s,
        Vec::new(),
    ))
}

/// Doubly robust estimate of `E[Y^{a,b}]` under the joint propensity model.
///
/// Twin 1's weight denominator is the joint cell `P(A1 = a, A2 = b)`; twin
/// 2's is `P(A1 = b, A2 = a)`. Cells are clipped before inversion.
pub fn estimate_m1(
    ds: &PairedDataset,
    outcome: &NuisanceFit,
    joint: &JointPropensity,
    a: u8,
    b: u8,
    clip: &PropensityClipConfig,
) -> Result<EffectEstimate, EstimatorError> {
    check_pattern(a, b)?;
    if ds.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    if joint.len() != ds.len() {
        return Err(EstimatorError::LengthMismatch {
            joint: joint.len(),
            data: ds.len(),
        });
    }
    let mu = forced_means(ds, outcome, a, b)?;
    let mut s = Vec::with_capacity(ds.len());
    let mut hits = 0usize;
    for (i, r) in ds.records().iter().enumerate() {
        let mut acc = 0.0;
        if r.a1 == a && r.a2 == b {
            let p = clip.clip(joint.cell(i, a, b));
            if p <= 0.0 {
                return Err(EstimatorError::ZeroPropensity {
                    pair_id: r.pair_id.clone(),
                    twin: 1,
                    value: p,
                });
            }
            acc += (r.y1 - mu[2 * i]) / p;
            hits += 1;
        }
        if r.a2 == a && r.a1 == b {
            let p = clip.clip(joint.cell(i, b, a));
            if p <= 0.0 {
                return Err(EstimatorError::ZeroPropensity {
                    pair_id: r.pair_id.clone(),
                    twin: 2,
                    value: p,
                });
            }
            acc += (r.y2 - mu[2 * i + 1]) / p;
            hits += 1;
        }
        s.push(0.5 * acc + 0.5 * (mu[2 * i] + mu[2 * i + 1]));
    }
    let warnings = pattern_warnings(hits, a, b);
    Ok(finish(
        ModelKind::M1,
        EstimandSpec::MeanPo { a, b },
        s,
        warnings,
    ))
}

/// Doubly robust estimate of `E[Y^{a,b}]` under the factorized propensity
/// model.
///
/// For twin `j` the weight denominator is
/// `P(A_j = a | C, X_j) * P(A_{3-j} = b | C, X_j)`: the first factor comes
/// from `prop_own` predicted on twin `j`'s row, the second from
/// `prop_cotwin` (a model of a twin's exposure given the *co-twin's*
/// individual covariates) predicted on the mirror row, so both factors
/// condition on twin `j`'s covariates. The product is clipped before
/// inversion.
pub fn estimate_m2(
    ds: &PairedDataset,
    outcome: &NuisanceFit,
    prop_own: &NuisanceFit,
    prop_cotwin: &NuisanceFit,
    a: u8,
    b: u8,
    clip: &PropensityClipConfig,
) -> Result<EffectEstimate, EstimatorError> {
    check_pattern(a, b)?;
    if ds.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let data = StackedData::from_dataset(ds);
    let mu = outcome.predict(&data, ExposureOverride::pattern(a, b))?;
    let pi = prop_own.predict(&data, ExposureOverride::default())?;
    let theta = prop_cotwin.predict(&data, ExposureOverride::default())?;

    let own_prob = |row: usize, v: u8| if v == 1 { pi[row] } else { 1.0 - pi[row] };
    let mirror_prob = |row: usize, v: u8| if v == 1 { theta[row] } else { 1.0 - theta[row] };

    let mut s = Vec::with_capacity(ds.len());
    let mut hits = 0usize;
    for (i, r) in ds.records().iter().enumerate() {
        let rows = [2 * i, 2 * i + 1];
        let mut acc = 0.0;
        for (twin, (&own_row, &mirror_row)) in
            rows.iter().zip(rows.iter().rev()).enumerate()
        {
            let (a_self, a_other, y) = if twin == 0 {
                (r.a1, r.a2, r.y1)
            } else {
                (r.a2, r.a1, r.y2)
            };
            if a_self == a && a_other == b {
                let p = clip.clip(own_prob(own_row, a) * mirror_prob(mirror_row, b));
                if p <= 0.0 {
                    return Err(EstimatorError::ZeroPropensity {
                        pair_id: r.pair_id.clone(),
                        twin: twin as u8 + 1,
                        value: p,
                    });
                }
                acc += (y - mu[own_row]) / p;
                hits += 1;
            }
        }
        s.push(0.5 * acc + 0.5 * (mu[2 * i] + mu[2 * i + 1]));
    }
    let warnings = pattern_warnings(hits, a, b);
    Ok(finish(
        ModelKind::M2,
        EstimandSpec::MeanPo { a, b },
        s,
        warnings,
    ))
}

fn pattern_warnings(hits: usize, a: u8, b: u8) -> Vec<String> {
    if hits == 0 {
        vec![format!(
            "no twin observed with exposure pattern ({a}, {b}); the weighted \
             residual term vanishes and the estimate equals the plug-in"
        )]
    } else {
        Vec::new()
    }
}

/// Linear combination of estimates from the same estimator, e.g. a spillover
/// or main-effect contrast of two mean potential outcomes.
pub fn contrast(
    parts: &[(f64, &EffectEstimate)],
    estimand: EstimandSpec,
) -> Result<EffectEstimate, EstimatorError> {
    let (_, first) = parts.first().ok_or(EstimatorError::EmptyContrast)?;
    if parts.iter().any(|(_, e)| e.model != first.model) {
        return Err(EstimatorError::MixedModels);
    }
    if parts.iter().any(|(_, e)| e.n_pairs != first.n_pairs) {
        return Err(EstimatorError::ContrastLength);
    }
    let point = parts.iter().map(|(w, e)| w * e.point).sum();
    let if_values = if parts.iter().all(|(_, e)| e.if_values.is_some()) {
        let mut combined = vec![0.0; first.n_pairs];
        for (w, e) in parts {
            for (c, v) in combined.iter_mut().zip(e.if_values.as_ref().unwrap()) {
                *c += w * v;
            }
        }
        Some(combined)
    } else {
        None
    };
    let mut warnings = Vec::new();
    for (_, e) in parts {
        for w in &e.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }
    Ok(EffectEstimate {
        model: first.model,
        estimand,
        point,
        if_values,
        n_pairs: first.n_pairs,
        warnings,
    })
}

/// The co-twin-control between/within regression
/// `y_own ~ 1 + a_own + a_bar + covariates`.
#[derive(Debug, Clone)]
pub struct BetweenWithinFit {
    pub beta0: f64,
    /// Coefficient of own exposure: the within-pair (discordant-twin)
    /// exposure contrast.
    pub beta_within: f64,
    /// Coefficient of the pair-mean exposure.
    pub beta_between: f64,
    /// All kept coefficients by design label.
    pub coefficients: Vec<(String, f64)>,
    pub n_pairs: usize,
    pub n_discordant: usize,
    /// Per-pair cluster-robust influence values for `beta_within`.
    pub if_values: Vec<f64>,
}

impl BetweenWithinFit {
    /// The within coefficient as an [`EffectEstimate`].
    pub fn effect(&self) -> EffectEstimate {
        EffectEstimate {
            model: ModelKind::Ctc,
            estimand: EstimandSpec::Ctc,
            point: self.beta_within,
            if_values: Some(self.if_values.clone()),
            n_pairs: self.n_pairs,
            warnings: Vec::new(),
        }
    }
}

/// Fits the between/within regression. `covariates` may reference shared
/// columns, own columns, and `co_`-prefixed co-twin columns; own and
/// pair-mean exposure terms are prepended automatically.
pub fn fit_ctc(
    ds: &PairedDataset,
    covariates: &BasisSpec,
) -> Result<BetweenWithinFit, EstimatorError> {
    if ds.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let n_discordant = ds.records().iter().filter(|r| r.a1 != r.a2).count();
    if n_discordant == 0 {
        return Err(EstimatorError::NoDiscordantPairs);
    }

    let mut terms = vec![Term::linear("a_own"), Term::linear("a_bar")];
    terms.extend(covariates.terms.iter().cloned());
    let spec = BasisSpec::new(terms);

    let data = StackedData::from_dataset(ds);
    let basis = resolve_basis(&spec, &data)?;
    let design = build_design(&basis, &data);
    let qr = mgs_select(&design, FitOptions::default().rank_tol);
    // Design columns 1 and 2 are a_own and a_bar (0 is the intercept); both
    // must survive the collinearity sweep for the fit to be interpretable.
    for required in [0usize, 1, 2] {
        if !qr.kept.contains(&required) {
            return Err(EstimatorError::Collinear(basis.labels()[required].clone()));
        }
    }

    let y = nalgebra::DVector::from_iterator(
        data.rows.len(),
        data.rows.iter().map(|r| r.y_own),
    );
    let coef = qr.solve(&y);
    let label_coef = |j: usize| {
        let k = qr.kept.iter().position(|&c| c == j).unwrap();
        coef[k]
    };
    let coefficients: Vec<(String, f64)> = qr
        .kept
        .iter()
        .zip(&coef)
        .map(|(&j, &b)| (basis.labels()[j].clone(), b))
        .collect();

    // Cluster-robust influence for beta_within: with u = (X'X)^{-1} e_w,
    // beta_hat - beta ~ mean over pairs of n * u' sum_{rows in pair} x_r e_r.
    let w_pos = qr.kept.iter().position(|&c| c == 1).unwrap();
    let mut e_w = vec![0.0; qr.kept.len()];
    e_w[w_pos] = 1.0;
    let u = qr.solve_gram(&e_w);
    let n = ds.len();
    let mut if_values = vec![0.0; n];
    for (row_idx, row) in data.rows.iter().enumerate() {
        let mut fitted = 0.0;
        for (k, &j) in qr.kept.iter().enumerate() {
            fitted += design[(row_idx, j)] * coef[k];
        }
        let resid = row.y_own - fitted;
        let mut lever = 0.0;
        for (k, &j) in qr.kept.iter().enumerate() {
            lever += u[k] * design[(row_idx, j)];
        }
        if_values[row.pair_index] += n as f64 * lever * resid;
    }

    Ok(BetweenWithinFit {
        beta0: label_coef(0),
        beta_within: label_coef(1),
        beta_between: label_coef(2),
        coefficients,
        n_pairs: n,
        n_discordant,
        if_values,
    })
}
