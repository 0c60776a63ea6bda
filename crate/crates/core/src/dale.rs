//! Plackett/Dale model for a pair of binary exposures.
//!
//! Given the marginal probabilities `f1 = P(A1 = 0)`, `f2 = P(A2 = 0)` and
//! the cross-ratio
//!
//! ```text
//! psi = p00 * p11 / (p01 * p10)
//! ```
//!
//! the joint table is determined: `F = P(A1 = 0, A2 = 0)` solves
//!
//! ```text
//! (psi - 1) F^2 - S F + psi f1 f2 = 0,   S = 1 + (psi - 1)(f1 + f2),
//! ```
//!
//! and the remaining cells follow from the margins. Exactly one quadratic
//! root lies inside the Frechet-Hoeffding bounds
//! `[max(0, f1 + f2 - 1), min(f1, f2)]`; both roots are evaluated and the
//! admissible one is kept. The cross-ratio of an exposure pair is modeled
//! on the log scale as a linear function of pair-level covariates and fit
//! by maximum likelihood with the margins held fixed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PairedDataset;
use crate::regression::{ExposureOverride, NuisanceFit, StackedData};

#[derive(Debug, Error)]
pub enum DaleError {
    #[error("margin probability {0} is outside (0, 1)")]
    InvalidMargin(f64),
    #[error("cross-ratio {0} must be finite and positive")]
    InvalidCrossRatio(f64),
    #[error("no quadratic root inside the Frechet bounds (f1={f1}, f2={f2}, psi={psi})")]
    NoValidRoot { f1: f64, f2: f64, psi: f64 },
    #[error("cross-ratio fit did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("unknown pair-level covariate `{0}`")]
    UnknownColumn(String),
    #[error("joint cell probabilities are invalid: {0}")]
    InvalidCells(String),
    #[error(transparent)]
    Fit(#[from] crate::regression::FitError),
}

/// Treat the cross-ratio as 1 within this distance and use the first-order
/// expansion, which is where the quadratic branch degenerates.
const PSI_UNITY_WINDOW: f64 = 1e-6;

/// `P(A1 = 0, A2 = 0)` under the Dale model.
pub fn dale_cell(f1: f64, f2: f64, psi: f64) -> Result<f64, DaleError> {
    for f in [f1, f2] {
        if !f.is_finite() || f <= 0.0 || f >= 1.0 {
            return Err(DaleError::InvalidMargin(f));
        }
    }
    if !psi.is_finite() || psi <= 0.0 {
        return Err(DaleError::InvalidCrossRatio(psi));
    }

    let lo = (f1 + f2 - 1.0).max(0.0);
    let hi = f1.min(f2);
    if (psi - 1.0).abs() < PSI_UNITY_WINDOW {
        // First-order expansion around independence:
        // F = f1 f2 + (psi - 1) f1 f2 (1 - f1)(1 - f2) + O((psi - 1)^2).
        let f = f1 * f2 * (1.0 + (psi - 1.0) * (1.0 - f1) * (1.0 - f2));
        return Ok(f.clamp(lo, hi));
    }

    let s = 1.0 + (psi - 1.0) * (f1 + f2);
    let disc = (s * s - 4.0 * psi * (psi - 1.0) * f1 * f2).max(0.0);
    let sqrt_disc = disc.sqrt();
    // Quotient form of the quadratic formula; the denominator is computed
    // without cancellation whichever sign S has.
    let denom = if s >= 0.0 {
        s + sqrt_disc
    } else {
        4.0 * psi * (1.0 - psi) * f1 * f2 / (sqrt_disc - s)
    };
    let root_a = 2.0 * psi * f1 * f2 / denom;
    // The companion root via the product of roots, psi f1 f2 / (psi - 1).
    let root_b = psi * f1 * f2 / ((psi - 1.0) * root_a);

    let tol = 1e-9 * (1.0 + hi);
    let admissible = |r: f64| r.is_finite() && r >= lo - tol && r <= hi + tol;
    let f = if admissible(root_a) {
        root_a
    } else if admissible(root_b) {
        root_b
    } else {
        return Err(DaleError::NoValidRoot { f1, f2, psi });
    };
    Ok(f.clamp(lo, hi))
}

/// Joint exposure table `[a1][a2]` under the Dale model.
pub fn joint_table(f1: f64, f2: f64, psi: f64) -> Result<[[f64; 2]; 2], DaleError> {
    let f = dale_cell(f1, f2, psi)?;
    let p00 = f;
    let p01 = (f1 - f).max(0.0);
    let p10 = (f2 - f).max(0.0);
    let p11 = (1.0 - f1 - f2 + f).max(0.0);
    Ok([[p00, p01], [p10, p11]])
}

/// Per-pair joint exposure probabilities `P(A1 = a1, A2 = a2 | pair)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPropensity {
    cells: Vec<[[f64; 2]; 2]>,
}

impl JointPropensity {
    pub fn new(cells: Vec<[[f64; 2]; 2]>) -> Result<Self, DaleError> {
        for (i, table) in cells.iter().enumerate() {
            let mut sum = 0.0;
            for row in table {
                for &p in row {
                    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                        return Err(DaleError::InvalidCells(format!(
                            "pair {i} has cell probability {p}"
                        )));
                    }
                    sum += p;
                }
            }
            if (sum - 1.0).abs() > 1e-8 {
                return Err(DaleError::InvalidCells(format!(
                    "pair {i} cells sum to {sum}"
                )));
            }
        }
        Ok(Self { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `P(A1 = a1, A2 = a2)` for the given pair.
    pub fn cell(&self, pair: usize, a1: u8, a2: u8) -> f64 {
        self.cells[pair][a1 as usize][a2 as usize]
    }
}

/// Options for the cross-ratio MLE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossRatioOptions {
    pub max_iter: usize,
    /// Convergence when the Euclidean norm of the mean per-pair score drops
    /// below this. The mean scale keeps the criterion attainable in f64
    /// arithmetic regardless of the sample size.
    pub grad_tol: f64,
}

impl Default for CrossRatioOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-8,
        }
    }
}

/// Fitted log-linear cross-ratio model
/// `log psi = alpha_0 + sum_k alpha_k z_k` over pair-level covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossRatioModel {
    /// Pair-level covariate names kept after the collinearity sweep; the
    /// intercept is implicit.
    pub terms: Vec<String>,
    /// `[intercept, coefficients...]`, aligned with `terms`.
    pub alpha: Vec<f64>,
    /// Requested covariates swept out as collinear with the columns before
    /// them.
    pub dropped: Vec<String>,
    pub iterations: usize,
    pub log_lik: f64,
}

impl CrossRatioModel {
    /// The cross-ratio for a pair with the given shared covariates.
    pub fn psi(&self, z: &[f64]) -> f64 {
        let mut eta = self.alpha[0];
        for (a, v) in self.alpha[1..].iter().zip(z) {
            eta += a * v;
        }
        eta.exp()
    }

    /// Builds the per-pair joint propensity tables from this cross-ratio
    /// model and marginal propensity fits for twin 1 and twin 2.
    pub fn predict_joint(
        &self,
        ds: &PairedDataset,
        margin_fit_1: &NuisanceFit,
        margin_fit_2: &NuisanceFit,
    ) -> Result<JointPropensity, DaleError> {
        let (f1, f2) = zero_margins(ds, margin_fit_1, margin_fit_2)?;
        let z_cols = resolve_terms(ds, &self.terms)?;
        let mut cells = Vec::with_capacity(ds.len());
        for (i, r) in ds.records().iter().enumerate() {
            let z: Vec<f64> = z_cols.iter().map(|&c| r.c[c]).collect();
            cells.push(joint_table(f1[i], f2[i], self.psi(&z))?);
        }
        JointPropensity::new(cells)
    }
}

fn resolve_terms(ds: &PairedDataset, terms: &[String]) -> Result<Vec<usize>, DaleError> {
    terms
        .iter()
        .map(|t| {
            ds.c_names()
                .iter()
                .position(|n| n == t)
                .ok_or_else(|| DaleError::UnknownColumn(t.clone()))
        })
        .collect()
}

/// Predicted `P(A_j = 0 | pair)` for each twin, guarded into (0, 1).
fn zero_margins(
    ds: &PairedDataset,
    fit1: &NuisanceFit,
    fit2: &NuisanceFit,
) -> Result<(Vec<f64>, Vec<f64>), DaleError> {
    let data = StackedData::from_dataset(ds);
    let p1 = fit1.predict(&data, ExposureOverride::default())?;
    let p2 = fit2.predict(&data, ExposureOverride::default())?;
    let guard = |p: f64| (1.0 - p).clamp(1e-12, 1.0 - 1e-12);
    let f1 = (0..ds.len()).map(|i| guard(p1[2 * i])).collect();
    let f2 = (0..ds.len()).map(|i| guard(p2[2 * i + 1])).collect();
    Ok((f1, f2))
}

struct CrossRatioProblem {
    /// Per pair: P(A_1 = 0), P(A_2 = 0), covariates (with leading 1), and
    /// the observed exposure pattern.
    f1: Vec<f64>,
    f2: Vec<f64>,
    z: Vec<Vec<f64>>,
    a: Vec<(u8, u8)>,
}

impl CrossRatioProblem {
    /// Log-likelihood and score at `alpha`.
    fn eval(&self, alpha: &[f64]) -> Result<(f64, Vec<f64>), DaleError> {
        let dim = alpha.len();
        let mut ll = 0.0;
        let mut score = vec![0.0; dim];
        for i in 0..self.f1.len() {
            let eta: f64 = self.z[i].iter().zip(alpha).map(|(z, a)| z * a).sum();
            let psi = eta.exp();
            if !psi.is_finite() || psi <= 0.0 {
                return Err(DaleError::InvalidCrossRatio(psi));
            }
            let (f1, f2) = (self.f1[i], self.f2[i]);
            let table = joint_table(f1, f2, psi)?;
            let f = table[0][0];
            let (a1, a2) = self.a[i];
            let p = table[a1 as usize][a2 as usize].max(1e-300);
            ll += p.ln();

            // dF/dpsi by implicit differentiation of the defining quadratic.
            let denom = (table[1][1] + f) + psi * (table[0][1] + table[1][0]);
            let df_dpsi = (f1 - f) * (f2 - f) / denom;
            // The concordant cells gain dF, the discordant cells lose it.
            let sign = if a1 == a2 { 1.0 } else { -1.0 };
            let dll_deta = sign * df_dpsi / p * psi;
            for (s, z) in score.iter_mut().zip(&self.z[i]) {
                *s += dll_deta * z;
            }
        }
        Ok((ll, score))
    }
}

/// Maximum-likelihood fit of the cross-ratio model with the margins held
/// fixed at the supplied fits (two-stage estimation). Newton iterations with
/// a finite-difference Hessian of the analytic score and step halving.
pub fn fit_cross_ratio(
    ds: &PairedDataset,
    margin_fit_1: &NuisanceFit,
    margin_fit_2: &NuisanceFit,
    terms: &[String],
    opts: &CrossRatioOptions,
) -> Result<CrossRatioModel, DaleError> {
    let (f1, f2) = zero_margins(ds, margin_fit_1, margin_fit_2)?;
    let z_cols = resolve_terms(ds, terms)?;

    // A covariate that is constant within the fitting data (for example
    // zygosity inside a single-zygosity stratum) leaves the pseudo-likelihood
    // flat along a ridge, so sweep collinear columns out of the design the
    // same way the regression fits do.
    let mut kept_terms: Vec<String> = terms.to_vec();
    let mut kept_cols: Vec<usize> = z_cols.clone();
    let mut dropped: Vec<String> = Vec::new();
    if !ds.is_empty() {
        let mut x = nalgebra::DMatrix::zeros(ds.len(), z_cols.len() + 1);
        for (i, r) in ds.records().iter().enumerate() {
            x[(i, 0)] = 1.0;
            for (j, &c) in z_cols.iter().enumerate() {
                x[(i, j + 1)] = r.c[c];
            }
        }
        let selection = crate::regression::mgs_select(&x, 1e-8);
        kept_terms = selection
            .kept
            .iter()
            .filter(|&&j| j > 0)
            .map(|&j| terms[j - 1].clone())
            .collect();
        kept_cols = selection
            .kept
            .iter()
            .filter(|&&j| j > 0)
            .map(|&j| z_cols[j - 1])
            .collect();
        dropped = selection
            .dropped
            .iter()
            .map(|&j| terms[j - 1].clone())
            .collect();
    }

    let problem = CrossRatioProblem {
        f1,
        f2,
        z: ds
            .records()
            .iter()
            .map(|r| {
                let mut z = vec![1.0];
                z.extend(kept_cols.iter().map(|&c| r.c[c]));
                z
            })
            .collect(),
        a: ds.records().iter().map(|r| (r.a1, r.a2)).collect(),
    };

    let dim = kept_terms.len() + 1;
    let n = ds.len().max(1) as f64;
    let mut alpha = vec![0.0; dim];
    let (mut ll, mut score) = problem.eval(&alpha)?;

    for iter in 1..=opts.max_iter {
        let grad_norm = score.iter().map(|g| g * g).sum::<f64>().sqrt() / n;
        #[cfg(feature = "trace-mle")]
        eprintln!("iter {iter}: ll={ll:.9} grad={grad_norm:.3e} alpha={alpha:?}");
        if grad_norm < opts.grad_tol {
            return Ok(CrossRatioModel {
                terms: kept_terms,
                alpha,
                dropped,
                iterations: iter - 1,
                log_lik: ll,
            });
        }

        // Central-difference Hessian of the analytic score.
        let mut h = nalgebra::DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let step = 1e-5 * (1.0 + alpha[k].abs());
            let mut up = alpha.clone();
            up[k] += step;
            let mut down = alpha.clone();
            down[k] -= step;
            let (_, g_up) = problem.eval(&up)?;
            let (_, g_down) = problem.eval(&down)?;
            for r in 0..dim {
                h[(r, k)] = (g_up[r] - g_down[r]) / (2.0 * step);
            }
        }
        h = (h.clone() + h.transpose()) * 0.5;

        let g = nalgebra::DVector::from_vec(score.clone());
        let mut direction = match h.clone().lu().solve(&(-&g)) {
            Some(d) => d,
            None => g.clone(),
        };
        // Fall back to steepest ascent if Newton points downhill.
        if direction.dot(&g) <= 0.0 {
            direction = g.clone();
        }

        let mut step = 1.0;
        let mut advanced = false;
        let floor = ll - 1e-10 * (1.0 + ll.abs());
        for _ in 0..30 {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(direction.iter())
                .map(|(a, d)| a + step * d)
                .collect();
            match problem.eval(&trial) {
                Ok((trial_ll, trial_score)) if trial_ll > floor => {
                    alpha = trial;
                    ll = trial_ll;
                    score = trial_score;
                    advanced = true;
                    break;
                }
                _ => step /= 2.0,
            }
        }
        if !advanced {
            // No admissible uphill step; report the cap.
            return Err(DaleError::NonConvergence(iter));
        }
    }

    let grad_norm = score.iter().map(|g| g * g).sum::<f64>().sqrt() / n;
    if grad_norm < opts.grad_tol {
        return Ok(CrossRatioModel {
            terms: kept_terms,
            alpha,
            dropped,
            iterations: opts.max_iter,
            log_lik: ll,
        });
    }
    Err(DaleError::NonConvergence(opts.max_iter))
}
