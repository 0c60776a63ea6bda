//! Fit-once, estimate-many orchestration.
//!
//! [`ModelConfig`] names the basis for every nuisance model; [`AnalysisPipeline::fit`]
//! fits them all on the stacked dataset, and [`AnalysisPipeline::estimate`]
//! evaluates any estimator/estimand combination against the shared fits.
//! The whole recipe is also available as a self-contained closure for the
//! bootstrap, which must refit everything inside each replicate.

use serde::{Deserialize, Serialize};

use crate::dale::{fit_cross_ratio, CrossRatioModel, CrossRatioOptions, JointPropensity};
use crate::data::PairedDataset;
use crate::estimators::{
    contrast, estimate_m1, estimate_m2, estimate_plugin, fit_ctc, BetweenWithinFit,
    EffectEstimate, EstimandSpec, ModelKind,
};
use crate::regression::{
    fit_linear, fit_logistic, BasisSpec, FitOptions, NuisanceFit, PropensityClipConfig,
    StackedData, Term,
};
use crate::Error;

/// Basis choices for every model the analysis fits.
///
/// The outcome bases may reference any stacked column except the response
/// itself. The own-exposure propensity conditions on shared and own
/// covariates; the co-twin propensity conditions on shared and `co_`-prefixed
/// covariates and is evaluated on the mirror row by the estimator. Cross-ratio
/// terms name shared columns. CTC covariates exclude exposure roles, which the
/// between/within regression adds itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Outcome regression used by the plug-in and joint-propensity estimators.
    pub outcome_m1: BasisSpec,
    /// Outcome regression used by the factorized estimator.
    pub outcome_m2: BasisSpec,
    /// Logistic model for a twin's own exposure.
    pub propensity_own: BasisSpec,
    /// Logistic model for the co-twin's exposure given own covariates.
    pub propensity_cotwin: BasisSpec,
    /// Shared-covariate terms of the log cross-ratio (intercept is implicit).
    #[serde(default)]
    pub cross_ratio_terms: Vec<String>,
    /// Extra covariates for the between/within regression.
    #[serde(default = "BasisSpec::empty")]
    pub ctc_terms: BasisSpec,
    /// Propensity clipping bound; zero disables clipping.
    #[serde(default)]
    pub clip_epsilon: f64,
}

enum ColumnClass {
    Shared,
    Own,
    Cotwin,
    Exposure,
    Outcome,
    Unknown,
}

fn classify(name: &str, c_names: &[String], x_names: &[String]) -> ColumnClass {
    match name {
        "a_own" | "a_cotwin" | "a_bar" => ColumnClass::Exposure,
        "y_own" => ColumnClass::Outcome,
        _ => {
            if c_names.iter().any(|c| c == name) {
                ColumnClass::Shared
            } else if x_names.iter().any(|x| x == name) {
                ColumnClass::Own
            } else if name
                .strip_prefix("co_")
                .is_some_and(|rest| x_names.iter().any(|x| x == rest))
            {
                ColumnClass::Cotwin
            } else {
                ColumnClass::Unknown
            }
        }
    }
}

impl ModelConfig {
    /// Parses a configuration from JSON.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model config: {e}")))
    }

    /// A config that saturates every model over binary 0/1 covariates:
    /// all products of covariate subsets, with exposure terms in the outcome
    /// bases. Clipping is disabled so fitted cells are inverted exactly.
    pub fn saturated_binary(c_names: &[String], x_names: &[String]) -> Self {
        let own: Vec<String> = c_names
            .iter()
            .cloned()
            .chain(x_names.iter().cloned())
            .collect();
        let cotwin: Vec<String> = c_names
            .iter()
            .cloned()
            .chain(x_names.iter().map(|x| format!("co_{x}")))
            .collect();
        let mut outcome_vars: Vec<String> = c_names.to_vec();
        outcome_vars.extend(x_names.iter().cloned());
        outcome_vars.extend(x_names.iter().map(|x| format!("co_{x}")));
        outcome_vars.push("a_own".to_string());
        outcome_vars.push("a_cotwin".to_string());
        let outcome = all_products(&outcome_vars);
        Self {
            outcome_m1: outcome.clone(),
            outcome_m2: outcome,
            propensity_own: all_products(&own),
            propensity_cotwin: all_products(&cotwin),
            cross_ratio_terms: c_names.to_vec(),
            ctc_terms: all_products(&own),
            clip_epsilon: 0.0,
        }
    }

    /// A plain working default: every model linear in its admissible
    /// covariates, exposure main effects plus their product in the outcome
    /// bases, the cross-ratio on zygosity when present, and mild propensity
    /// clipping.
    pub fn default_linear(c_names: &[String], x_names: &[String]) -> Self {
        let linear = |names: &[String]| {
            BasisSpec::new(names.iter().map(|n| Term::Linear(n.clone())).collect())
        };
        let own: Vec<String> = c_names
            .iter()
            .cloned()
            .chain(x_names.iter().cloned())
            .collect();
        let cotwin: Vec<String> = c_names
            .iter()
            .cloned()
            .chain(x_names.iter().map(|x| format!("co_{x}")))
            .collect();
        let mut outcome_vars = own.clone();
        outcome_vars.extend(x_names.iter().map(|x| format!("co_{x}")));
        let mut outcome = linear(&outcome_vars);
        outcome.terms.push(Term::linear("a_own"));
        outcome.terms.push(Term::linear("a_cotwin"));
        outcome.terms.push(Term::interaction(&["a_own", "a_cotwin"]));
        Self {
            outcome_m1: outcome.clone(),
            outcome_m2: outcome,
            propensity_own: linear(&own),
            propensity_cotwin: linear(&cotwin),
            cross_ratio_terms: c_names.iter().filter(|n| *n == "zygosity").cloned().collect(),
            ctc_terms: BasisSpec::empty(),
            clip_epsilon: 1e-3,
        }
    }

    /// Checks every basis against the dataset's column roles.
    pub fn validate(&self, c_names: &[String], x_names: &[String]) -> Result<(), Error> {
        let check = |role: &str,
                     spec: &BasisSpec,
                     allow: &dyn Fn(&ColumnClass) -> bool|
         -> Result<(), Error> {
            for name in spec.references() {
                let class = classify(name, c_names, x_names);
                if matches!(class, ColumnClass::Unknown) {
                    return Err(Error::Config(format!(
                        "{role} references unknown column `{name}`"
                    )));
                }
                if !allow(&class) {
                    return Err(Error::Config(format!(
                        "{role} may not reference `{name}`"
                    )));
                }
            }
            Ok(())
        };
        let no_outcome = |c: &ColumnClass| !matches!(c, ColumnClass::Outcome);
        check("outcome_m1", &self.outcome_m1, &no_outcome)?;
        check("outcome_m2", &self.outcome_m2, &no_outcome)?;
        check("propensity_own", &self.propensity_own, &|c| {
            matches!(c, ColumnClass::Shared | ColumnClass::Own)
        })?;
        check("propensity_cotwin", &self.propensity_cotwin, &|c| {
            matches!(c, ColumnClass::Shared | ColumnClass::Cotwin)
        })?;
        check("ctc_terms", &self.ctc_terms, &|c| {
            matches!(
                c,
                ColumnClass::Shared | ColumnClass::Own | ColumnClass::Cotwin
            )
        })?;
        for name in &self.cross_ratio_terms {
            if !c_names.iter().any(|c| c == name) {
                return Err(Error::Config(format!(
                    "cross_ratio_terms may only name shared columns; `{name}` is not one"
                )));
            }
        }
        if !(0.0..0.5).contains(&self.clip_epsilon) {
            return Err(Error::Config(format!(
                "clip_epsilon {} must lie in [0, 0.5)",
                self.clip_epsilon
            )));
        }
        Ok(())
    }
}

/// All products of nonempty subsets of the given columns.
fn all_products(vars: &[String]) -> BasisSpec {
    use crate::regression::Term;
    let mut terms = Vec::new();
    for mask in 1u32..(1 << vars.len()) {
        let subset: Vec<String> = vars
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, v)| v.clone())
            .collect();
        terms.push(Term::Interaction(subset));
    }
    BasisSpec::new(terms)
}

/// All nuisance models fitted on one dataset.
#[derive(Debug, Clone)]
pub struct AnalysisPipeline {
    ds: PairedDataset,
    config: ModelConfig,
    clip: PropensityClipConfig,
    outcome_m1: NuisanceFit,
    outcome_m2: NuisanceFit,
    propensity_own: NuisanceFit,
    propensity_cotwin: NuisanceFit,
    cross_ratio: CrossRatioModel,
    joint: JointPropensity,
}

impl AnalysisPipeline {
    /// Validates the config and fits every nuisance model once.
    pub fn fit(ds: &PairedDataset, config: &ModelConfig) -> Result<Self, Error> {
        config.validate(ds.c_names(), ds.x_names())?;
        let clip = PropensityClipConfig::new(config.clip_epsilon)
            .map_err(crate::regression::FitError::from)
            .map_err(Error::Fit)?;
        let stacked = StackedData::from_dataset(ds);
        let opts = FitOptions::default();
        let outcome_m1 = fit_linear(&stacked, "y_own", &config.outcome_m1, &opts)?;
        let outcome_m2 = fit_linear(&stacked, "y_own", &config.outcome_m2, &opts)?;
        let propensity_own = fit_logistic(&stacked, "a_own", &config.propensity_own, &opts)?;
        let propensity_cotwin =
            fit_logistic(&stacked, "a_own", &config.propensity_cotwin, &opts)?;
        let cross_ratio = fit_cross_ratio(
            ds,
            &propensity_own,
            &propensity_own,
            &config.cross_ratio_terms,
            &CrossRatioOptions::default(),
        )?;
        let joint = cross_ratio.predict_joint(ds, &propensity_own, &propensity_own)?;
        Ok(Self {
            ds: ds.clone(),
            config: config.clone(),
            clip,
            outcome_m1,
            outcome_m2,
            propensity_own,
            propensity_cotwin,
            cross_ratio,
            joint,
        })
    }

    pub fn dataset(&self) -> &PairedDataset {
        &self.ds
    }

    pub fn outcome_m1(&self) -> &NuisanceFit {
        &self.outcome_m1
    }

    pub fn outcome_m2(&self) -> &NuisanceFit {
        &self.outcome_m2
    }

    pub fn propensity_own(&self) -> &NuisanceFit {
        &self.propensity_own
    }

    pub fn propensity_cotwin(&self) -> &NuisanceFit {
        &self.propensity_cotwin
    }

    pub fn cross_ratio(&self) -> &CrossRatioModel {
        &self.cross_ratio
    }

    pub fn joint_propensity(&self) -> &JointPropensity {
        &self.joint
    }

    /// Dropped-column and convergence notes from all fits.
    pub fn fit_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let fits = [
            ("outcome_m1", &self.outcome_m1),
            ("outcome_m2", &self.outcome_m2),
            ("propensity_own", &self.propensity_own),
            ("propensity_cotwin", &self.propensity_cotwin),
        ];
        for (role, fit) in fits {
            for col in &fit.dropped {
                out.push(format!("{role}: dropped collinear column `{col}`"));
            }
            if !fit.converged {
                out.push(format!(
                    "{role}: did not converge in {} iterations",
                    fit.iterations
                ));
            }
        }
        for col in &self.cross_ratio.dropped {
            out.push(format!("cross_ratio: dropped collinear column `{col}`"));
        }
        out
    }

    fn mean_po(&self, model: ModelKind, a: u8, b: u8) -> Result<EffectEstimate, Error> {
        let est = match model {
            ModelKind::Plugin => estimate_plugin(&self.ds, &self.outcome_m1, a, b)?,
            ModelKind::M1 => estimate_m1(
                &self.ds,
                &self.outcome_m1,
                &self.joint,
                a,
                b,
                &self.clip,
            )?,
            ModelKind::M2 => estimate_m2(
                &self.ds,
                &self.outcome_m2,
                &self.propensity_own,
                &self.propensity_cotwin,
                a,
                b,
                &self.clip,
            )?,
            ModelKind::Ctc => {
                return Err(Error::Config(
                    "the ctc model estimates only the ctc estimand".into(),
                ))
            }
        };
        Ok(est)
    }

    /// The between/within regression on this dataset.
    pub fn ctc_fit(&self) -> Result<BetweenWithinFit, Error> {
        Ok(fit_ctc(&self.ds, &self.config.ctc_terms)?)
    }

    /// Evaluates one estimator on one estimand.
    pub fn estimate(
        &self,
        model: ModelKind,
        estimand: EstimandSpec,
    ) -> Result<EffectEstimate, Error> {
        match estimand {
            EstimandSpec::MeanPo { a, b } => self.mean_po(model, a, b),
            EstimandSpec::Spillover => {
                let base = self.mean_po(model, 0, 0)?;
                let other = self.mean_po(model, 0, 1)?;
                Ok(contrast(
                    &[(1.0, &base), (-1.0, &other)],
                    EstimandSpec::Spillover,
                )?)
            }
            EstimandSpec::Main => {
                let base = self.mean_po(model, 0, 0)?;
                let other = self.mean_po(model, 1, 0)?;
                Ok(contrast(
                    &[(1.0, &base), (-1.0, &other)],
                    EstimandSpec::Main,
                )?)
            }
            EstimandSpec::Ctc => {
                if model != ModelKind::Ctc {
                    return Err(Error::Config(format!(
                        "the ctc estimand requires the ctc model, not {model}"
                    )));
                }
                Ok(self.ctc_fit()?.effect())
            }
        }
    }
}

/// A self-contained refit-and-estimate closure for the bootstrap: fits every
/// nuisance model, including the cross-ratio likelihood, inside each call.
pub fn point_estimator(
    config: ModelConfig,
    model: ModelKind,
    estimand: EstimandSpec,
) -> impl Fn(&PairedDataset) -> Result<f64, Error> + Sync {
    move |ds| {
        let pipeline = AnalysisPipeline::fit(ds, &config)?;
        Ok(pipeline.estimate(model, estimand)?.point)
    }
}
