//! Wald and percentile-bootstrap confidence intervals.
//!
//! Wald intervals come straight from the per-pair influence values of an
//! [`EffectEstimate`]: `se = sqrt(sum if_i^2) / n` and the normal quantile
//! is computed by a rational approximation rather than a hardcoded 1.96.
//!
//! The bootstrap resamples whole pairs with replacement and re-runs the
//! entire estimation (all nuisance fits included) on each replicate, so the
//! interval reflects nuisance estimation as well. Each replicate draws its
//! indices from an independent counter-based stream, which makes the result
//! identical across thread counts and across runs.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{subset_by_zygosity, PairedDataset, Zygosity};
use crate::estimators::EffectEstimate;
use crate::rng::{stream, TAG_BOOTSTRAP};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("confidence level {0} must lie strictly between 0 and 1")]
    InvalidLevel(f64),
    #[error("estimate carries no influence values; a Wald interval needs them")]
    MissingInfluence,
    #[error("bootstrap plan must request at least one replicate")]
    ZeroReplicates,
    #[error(
        "{failed} of {reps} bootstrap replicates failed, above the {cap:.0}% cap; \
         the estimator is too unstable on resampled data"
    )]
    TooManyFailedReplicates { failed: usize, reps: usize, cap: f64 },
    #[error("point estimate failed: {0}")]
    PointEstimate(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// How an interval was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Wald,
    PercentileBootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    /// Influence-function standard error (Wald intervals only).
    pub se: Option<f64>,
    /// Bootstrap replicates dropped because estimation failed on them.
    pub n_failed: usize,
}

/// Size and seed of a bootstrap run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BootstrapPlan {
    pub reps: usize,
    pub seed: u64,
}

/// Fraction of replicates allowed to fail before the bootstrap aborts.
const FAILURE_CAP: f64 = 0.05;

/// Inverse standard normal CDF by a two-region rational approximation
/// (absolute error below ~1.2e-9 across (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability {p} out of range");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| -> f64 {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

fn check_level(level: f64) -> Result<(), InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel(level));
    }
    Ok(())
}

/// Wald interval `point +/- z * se` from the estimate's influence values.
pub fn wald_ci(est: &EffectEstimate, level: f64) -> Result<ConfidenceInterval, InferenceError> {
    check_level(level)?;
    let ifs = est
        .if_values
        .as_ref()
        .ok_or(InferenceError::MissingInfluence)?;
    if ifs.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    let n = ifs.len() as f64;
    let se = ifs.iter().map(|v| v * v).sum::<f64>().sqrt() / n;
    let z = normal_quantile(0.5 + level / 2.0);
    Ok(ConfidenceInterval {
        lower: est.point - z * se,
        upper: est.point + z * se,
        level,
        method: CiMethod::Wald,
        se: Some(se),
        n_failed: 0,
    })
}

/// 1-based percentile ranks for a two-sided interval over `b` sorted
/// replicate values.
fn percentile_ranks(b: usize, level: f64) -> (usize, usize) {
    let alpha = 1.0 - level;
    let lo = ((alpha / 2.0 * b as f64).floor() as usize).max(1);
    let hi = (((1.0 - alpha / 2.0) * b as f64).ceil() as usize).min(b);
    (lo, hi)
}

fn resample_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn percentile_interval(
    mut points: Vec<f64>,
    reps: usize,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    let failed = reps - points.len();
    if (failed as f64) > FAILURE_CAP * reps as f64 {
        return Err(InferenceError::TooManyFailedReplicates {
            failed,
            reps,
            cap: FAILURE_CAP * 100.0,
        });
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = percentile_ranks(points.len(), level);
    // The spread of the retained replicates doubles as a bootstrap SE
    // estimate alongside the percentile bounds.
    let se = if points.len() > 1 {
        let mean = points.iter().sum::<f64>() / points.len() as f64;
        let var = points.iter().map(|p| (p - mean).powi(2)).sum::<f64>()
            / (points.len() - 1) as f64;
        Some(var.sqrt())
    } else {
        None
    };
    Ok(ConfidenceInterval {
        lower: points[lo - 1],
        upper: points[hi - 1],
        level,
        method: CiMethod::PercentileBootstrap,
        se,
        n_failed: failed,
    })
}

/// Pair-resampling percentile bootstrap.
///
/// `estimator` is rerun from scratch on every resampled dataset; replicates
/// where it errors or returns a non-finite value are dropped, up to a 5%
/// cap. Replicate `b` draws from `stream(plan.seed, [TAG_BOOTSTRAP, b])`, so
/// results do not depend on thread scheduling.
pub fn bootstrap_ci(
    ds: &PairedDataset,
    estimator: &(dyn Fn(&PairedDataset) -> Result<f64, crate::Error> + Sync),
    plan: &BootstrapPlan,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    check_level(level)?;
    if plan.reps == 0 {
        return Err(InferenceError::ZeroReplicates);
    }
    if ds.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    let n = ds.len();
    let points: Vec<f64> = (0..plan.reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(plan.seed, &[TAG_BOOTSTRAP, b as u64]);
            let resampled = ds.resample(&resample_indices(&mut rng, n));
            estimator(&resampled).ok().filter(|v| v.is_finite())
        })
        .collect::<Vec<Option<f64>>>()
        .into_iter()
        .flatten()
        .collect();
    percentile_interval(points, plan.reps, level)
}

/// Difference of a statistic between monozygotic and dizygotic pairs
/// (MZ minus DZ), with a stratified pair bootstrap: each replicate resamples
/// within the two zygosity strata independently.
pub fn subgroup_difference(
    ds: &PairedDataset,
    estimator: &(dyn Fn(&PairedDataset) -> Result<f64, crate::Error> + Sync),
    plan: &BootstrapPlan,
    level: f64,
) -> Result<(f64, ConfidenceInterval), InferenceError> {
    check_level(level)?;
    if plan.reps == 0 {
        return Err(InferenceError::ZeroReplicates);
    }
    let mz = subset_by_zygosity(ds, Zygosity::Mz)?;
    let dz = subset_by_zygosity(ds, Zygosity::Dz)?;
    let err_str = |e: crate::Error| InferenceError::PointEstimate(e.to_string());
    let point = estimator(&mz).map_err(err_str)? - estimator(&dz).map_err(err_str)?;

    let points: Vec<f64> = (0..plan.reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(plan.seed, &[TAG_BOOTSTRAP, b as u64]);
            let mz_res = mz.resample(&resample_indices(&mut rng, mz.len()));
            let dz_res = dz.resample(&resample_indices(&mut rng, dz.len()));
            let m = estimator(&mz_res).ok().filter(|v| v.is_finite())?;
            let d = estimator(&dz_res).ok().filter(|v| v.is_finite())?;
            Some(m - d)
        })
        .collect::<Vec<Option<f64>>>()
        .into_iter()
        .flatten()
        .collect();
    let ci = percentile_interval(points, plan.reps, level)?;
    Ok((point, ci))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TwinPairRecord;
    use crate::estimators::{EstimandSpec, ModelKind};

    /// Independent oracle: standard normal CDF by a rational-fraction
    /// approximation with absolute error below ~1e-14.
    fn normal_cdf(x: f64) -> f64 {
        let xabs = x.abs();
        if xabs > 37.0 {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        let e = (-xabs * xabs / 2.0).exp();
        let cum = if xabs < 7.07106781186547 {
            let mut num = 3.52624965998911e-2 * xabs + 0.700383064443688;
            num = num * xabs + 6.37396220353165;
            num = num * xabs + 33.912866078383;
            num = num * xabs + 112.079291497871;
            num = num * xabs + 221.213596169931;
            num = num * xabs + 220.206867912376;
            let mut den = 8.83883476483184e-2 * xabs + 1.75566716318264;
            den = den * xabs + 16.064177579207;
            den = den * xabs + 86.7807322029461;
            den = den * xabs + 296.564248779674;
            den = den * xabs + 637.333633378831;
            den = den * xabs + 793.826512519948;
            den = den * xabs + 440.413735824752;
            e * num / den
        } else {
            let mut build = xabs + 0.65;
            build = xabs + 4.0 / build;
            build = xabs + 3.0 / build;
            build = xabs + 2.0 / build;
            build = xabs + 1.0 / build;
            e / (build * 2.506628274631)
        };
        if x > 0.0 {
            1.0 - cum
        } else {
            cum
        }
    }

    #[test]
    fn quantile_inverts_an_independent_normal_cdf() {
        let mut p = 1e-8;
        while p < 1.0 {
            let q = normal_quantile(p);
            assert!(
                (normal_cdf(q) - p).abs() < 5e-9,
                "Phi(quantile({p})) = {} off by {}",
                normal_cdf(q),
                (normal_cdf(q) - p).abs()
            );
            p = if p < 0.4 { p * 2.7 } else { p + 0.05 };
        }
    }

    #[test]
    fn quantile_hits_reference_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.995) - 2.5758293035489004).abs() < 1e-8);
        assert!(normal_quantile(0.5).abs() < 1e-12);
        for p in [0.01, 0.1, 0.3, 0.45] {
            assert!(
                (normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-9,
                "asymmetric at {p}"
            );
        }
    }

    fn estimate_with_ifs(point: f64, ifs: Vec<f64>) -> EffectEstimate {
        let n_pairs = ifs.len();
        EffectEstimate {
            model: ModelKind::Plugin,
            estimand: EstimandSpec::MeanPo { a: 0, b: 0 },
            point,
            if_values: Some(ifs),
            n_pairs,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn wald_interval_matches_the_hand_computed_example() {
        // if = (1, -1, 2, -2): se = sqrt(10)/4, and at the 95% level the
        // half-width is z * se = 1.9599639845 * 0.7905694150 = 1.5494875802.
        let est = estimate_with_ifs(0.0, vec![1.0, -1.0, 2.0, -2.0]);
        let ci = wald_ci(&est, 0.95).unwrap();
        let se = ci.se.unwrap();
        assert!((se - 10f64.sqrt() / 4.0).abs() < 1e-12);
        assert!((ci.upper - 1.5494875802).abs() < 1e-6, "upper {}", ci.upper);
        assert!((ci.lower + 1.5494875802).abs() < 1e-6);
    }

    #[test]
    fn wald_needs_influence_values_and_a_valid_level() {
        let mut est = estimate_with_ifs(0.0, vec![1.0, -1.0]);
        assert!(matches!(
            wald_ci(&est, 1.0),
            Err(InferenceError::InvalidLevel(_))
        ));
        est.if_values = None;
        assert!(matches!(
            wald_ci(&est, 0.95),
            Err(InferenceError::MissingInfluence)
        ));
    }

    #[test]
    fn percentile_ranks_follow_the_floor_ceil_convention() {
        assert_eq!(percentile_ranks(1000, 0.95), (25, 975));
        assert_eq!(percentile_ranks(20, 0.90), (1, 19));
        // Tiny runs clamp into range instead of panicking.
        assert_eq!(percentile_ranks(5, 0.95), (1, 5));
    }

    fn toy_dataset(n: usize, seed: u64) -> PairedDataset {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, &[99]);
        let records = (0..n)
            .map(|i| TwinPairRecord {
                pair_id: format!("p{i}"),
                c: vec![f64::from(u8::from(i % 3 == 0))],
                x1: vec![],
                x2: vec![],
                a1: 0,
                a2: 0,
                y1: rng.gen_range(-1.0..1.0) + if i % 3 == 0 { 10.0 } else { 5.0 },
                y2: rng.gen_range(-1.0..1.0),
            })
            .collect();
        PairedDataset::new(vec!["zygosity".into()], vec![], records).unwrap()
    }

    fn mean_y1(ds: &PairedDataset) -> Result<f64, crate::Error> {
        Ok(ds.records().iter().map(|r| r.y1).sum::<f64>() / ds.len() as f64)
    }

    #[test]
    fn bootstrap_is_deterministic_and_brackets_the_point() {
        let ds = toy_dataset(60, 3);
        let plan = BootstrapPlan { reps: 400, seed: 7 };
        let ci1 = bootstrap_ci(&ds, &mean_y1, &plan, 0.95).unwrap();
        let ci2 = bootstrap_ci(&ds, &mean_y1, &plan, 0.95).unwrap();
        assert_eq!(ci1, ci2);
        assert_eq!(ci1.n_failed, 0);
        let point = mean_y1(&ds).unwrap();
        assert!(ci1.lower < point && point < ci1.upper);
        assert!(ci1.upper - ci1.lower < 2.0);

        let other = bootstrap_ci(&ds, &mean_y1, &BootstrapPlan { reps: 400, seed: 8 }, 0.95)
            .unwrap();
        assert_ne!(ci1, other, "different seeds should move the interval");
    }

    #[test]
    fn bootstrap_width_shrinks_like_root_n() {
        let narrow = toy_dataset(400, 4);
        let wide = toy_dataset(100, 4);
        let plan = BootstrapPlan { reps: 500, seed: 11 };
        let ci_narrow = bootstrap_ci(&narrow, &mean_y1, &plan, 0.95).unwrap();
        let ci_wide = bootstrap_ci(&wide, &mean_y1, &plan, 0.95).unwrap();
        let ratio = (ci_wide.upper - ci_wide.lower) / (ci_narrow.upper - ci_narrow.lower);
        assert!(
            (ratio - 2.0).abs() < 0.6,
            "width ratio {ratio} not near sqrt(400/100) = 2"
        );
    }

    #[test]
    fn complete_estimation_failure_is_reported() {
        let ds = toy_dataset(20, 5);
        let broken = |_: &PairedDataset| -> Result<f64, crate::Error> {
            Err(crate::Error::Config("nope".into()))
        };
        let err = bootstrap_ci(&ds, &broken, &BootstrapPlan { reps: 50, seed: 1 }, 0.95)
            .unwrap_err();
        assert!(matches!(
            err,
            InferenceError::TooManyFailedReplicates { failed: 50, reps: 50, .. }
        ));
    }

    #[test]
    fn subgroup_difference_separates_strata() {
        let ds = toy_dataset(90, 6);
        let plan = BootstrapPlan { reps: 300, seed: 13 };
        let (point, ci) = subgroup_difference(&ds, &mean_y1, &plan, 0.95).unwrap();
        // MZ pairs (zygosity = 1, every third) have y1 near 10, DZ near 5.
        assert!((point - 5.0).abs() < 1.0, "difference {point}");
        assert!(ci.lower < point && point < ci.upper);
        let (point2, ci2) = subgroup_difference(&ds, &mean_y1, &plan, 0.95).unwrap();
        assert_eq!(point, point2);
        assert_eq!(ci, ci2);
    }
}
