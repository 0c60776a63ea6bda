//! Nuisance regression engine.
//!
//! Outcome and propensity models are specified as a [`BasisSpec`] (linear
//! terms, interactions, B-spline smooths, tensor smooths, categorical
//! dummies), resolved against stacked twin-level data, and fit by ordinary
//! least squares or iteratively reweighted least squares for the logistic
//! link. Collinear design columns are dropped up front and recorded on the
//! fit. Fitted models predict on the mean scale with exposures optionally
//! overridden, which is how counterfactual means enter the estimators.

mod basis;

pub use basis::{resolve_basis, BasisSpec, ExposureOverride, ResolvedBasis, StackedData, Term};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("interaction term with no columns")]
    EmptyTerm,
    #[error("column `{column}` is constant; cannot place spline knots or dummies")]
    DegenerateSpline { column: String },
    #[error("no rows to fit")]
    NoRows,
    #[error("response `{column}` must be 0 or 1 for a logistic fit (row {row})")]
    InvalidResponse { column: String, row: usize },
    #[error("response is constant; logistic fit is degenerate")]
    DegenerateResponse,
    #[error("separation detected: |coefficient| reached {max_abs:.1} (threshold {threshold})")]
    Separation { max_abs: f64, threshold: f64 },
    #[error("design matrix became numerically singular during reweighting")]
    Singular,
    #[error("clip epsilon must lie in [0, 0.5), got {0}")]
    InvalidClip(f64),
    #[error("fit was built for different columns than the prediction data")]
    SchemaMismatch,
}

/// Options for the fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// IRLS iteration cap.
    pub max_iter: usize,
    /// IRLS stops when no coefficient moves more than this.
    pub tol: f64,
    /// IRLS aborts with a separation error when any coefficient magnitude
    /// exceeds this.
    pub separation_threshold: f64,
    /// A design column is dropped when its residual norm after projecting
    /// out earlier columns falls below this fraction of its own norm.
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            separation_threshold: 30.0,
            rank_tol: 1e-8,
        }
    }
}

/// Clipping applied to predicted probabilities before they enter weight
/// denominators. `epsilon = 0` disables clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityClipConfig {
    pub epsilon: f64,
}

impl Default for PropensityClipConfig {
    fn default() -> Self {
        Self { epsilon: 0.01 }
    }
}

impl PropensityClipConfig {
    pub fn new(epsilon: f64) -> Result<Self, FitError> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(FitError::InvalidClip(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn clip(&self, p: f64) -> f64 {
        if self.epsilon > 0.0 {
            p.clamp(self.epsilon, 1.0 - self.epsilon)
        } else {
            p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Identity,
    Logit,
}

/// A fitted nuisance model.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    link: Link,
    basis: ResolvedBasis,
    c_names: Vec<String>,
    x_names: Vec<String>,
    /// Indices of the design columns kept after the collinearity sweep.
    kept: Vec<usize>,
    /// Coefficients, one per kept column.
    coef: Vec<f64>,
    /// Labels of dropped design columns.
    pub dropped: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    /// Residual sum of squares (identity link) or -2 log-likelihood (logit).
    pub deviance: f64,
    /// Deviance after each IRLS iteration (single entry for OLS).
    pub deviance_trace: Vec<f64>,
}

impl NuisanceFit {
    pub fn link(&self) -> Link {
        self.link
    }

    /// `(label, coefficient)` pairs for the kept design columns.
    pub fn coefficients(&self) -> Vec<(String, f64)> {
        self.kept
            .iter()
            .zip(&self.coef)
            .map(|(&j, &b)| (self.basis.labels()[j].clone(), b))
            .collect()
    }

    /// Coefficient of the design column with the given label, if kept.
    pub fn coef_for(&self, label: &str) -> Option<f64> {
        self.kept
            .iter()
            .position(|&j| self.basis.labels()[j] == label)
            .map(|k| self.coef[k])
    }

    fn check_schema(&self, data: &StackedData) -> Result<(), FitError> {
        if self.c_names == data.c_names && self.x_names == data.x_names {
            Ok(())
        } else {
            Err(FitError::SchemaMismatch)
        }
    }

    /// Linear predictor for each stacked row, exposures optionally
    /// overridden.
    pub fn linear_predictor(
        &self,
        data: &StackedData,
        ov: ExposureOverride,
    ) -> Result<Vec<f64>, FitError> {
        self.check_schema(data)?;
        let mut full = Vec::with_capacity(self.basis.n_columns());
        let mut out = Vec::with_capacity(data.rows.len());
        for row in &data.rows {
            self.basis.row_into(row, ov, &mut full);
            let eta: f64 = self
                .kept
                .iter()
                .zip(&self.coef)
                .map(|(&j, &b)| full[j] * b)
                .sum();
            out.push(eta);
        }
        Ok(out)
    }

    /// Mean-scale predictions (fitted probabilities for the logit link).
    pub fn predict(&self, data: &StackedData, ov: ExposureOverride) -> Result<Vec<f64>, FitError> {
        let mut eta = self.linear_predictor(data, ov)?;
        if self.link == Link::Logit {
            for v in &mut eta {
                *v = expit(*v);
            }
        }
        Ok(eta)
    }
}

fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass and
/// in-order column selection: a column whose residual norm falls below
/// `rel_tol` times its own norm is dropped.
pub(crate) struct SelectedQr {
    q: Vec<DVector<f64>>,
    /// Column k holds the R entries of kept column k (length k+1).
    r_cols: Vec<Vec<f64>>,
    pub(crate) kept: Vec<usize>,
    pub(crate) dropped: Vec<usize>,
}

pub(crate) fn mgs_select(x: &DMatrix<f64>, rel_tol: f64) -> SelectedQr {
    let mut out = SelectedQr {
        q: Vec::new(),
        r_cols: Vec::new(),
        kept: Vec::new(),
        dropped: Vec::new(),
    };
    for j in 0..x.ncols() {
        let mut v = x.column(j).clone_owned();
        let orig = v.norm();
        let mut coeffs = vec![0.0; out.q.len()];
        for _ in 0..2 {
            for (k, q) in out.q.iter().enumerate() {
                let d = q.dot(&v);
                coeffs[k] += d;
                v.axpy(-d, q, 1.0);
            }
        }
        let norm = v.norm();
        if orig > 0.0 && norm > rel_tol * orig {
            coeffs.push(norm);
            out.r_cols.push(coeffs);
            out.q.push(v / norm);
            out.kept.push(j);
        } else {
            out.dropped.push(j);
        }
    }
    out
}

impl SelectedQr {
    /// Least-squares coefficients over the kept columns.
    pub(crate) fn solve(&self, y: &DVector<f64>) -> Vec<f64> {
        let k = self.q.len();
        let mut qty: Vec<f64> = self.q.iter().map(|q| q.dot(y)).collect();
        for i in (0..k).rev() {
            for j in (i + 1)..k {
                qty[i] -= self.r_cols[j][i] * qty[j];
            }
            qty[i] /= self.r_cols[i][i];
        }
        qty
    }

    /// Solves `(X'X) u = rhs` over the kept columns via `R'R u = rhs`,
    /// for sandwich-style influence calculations.
    pub(crate) fn solve_gram(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.q.len();
        let mut v = vec![0.0; k];
        for i in 0..k {
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= self.r_cols[i][j] * v[j];
            }
            v[i] = acc / self.r_cols[i][i];
        }
        for i in (0..k).rev() {
            let mut acc = v[i];
            for j in (i + 1)..k {
                acc -= self.r_cols[j][i] * v[j];
            }
            v[i] = acc / self.r_cols[i][i];
        }
        v
    }
}

pub(crate) fn build_design(
    basis: &ResolvedBasis,
    data: &StackedData,
) -> DMatrix<f64> {
    let m = data.rows.len();
    let p = basis.n_columns();
    let mut x = DMatrix::zeros(m, p);
    let mut buf = Vec::with_capacity(p);
    for (i, row) in data.rows.iter().enumerate() {
        basis.row_into(row, ExposureOverride::default(), &mut buf);
        for (j, &v) in buf.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    x
}

fn response_vector(data: &StackedData, response: &str) -> Result<DVector<f64>, FitError> {
    let source = data.resolve(response)?;
    Ok(DVector::from_iterator(
        data.rows.len(),
        data.rows
            .iter()
            .map(|r| source.value(r, ExposureOverride::default())),
    ))
}

/// Ordinary least squares of `response` on the basis.
pub fn fit_linear(
    data: &StackedData,
    response: &str,
    spec: &BasisSpec,
    opts: &FitOptions,
) -> Result<NuisanceFit, FitError> {
    if data.rows.is_empty() {
        return Err(FitError::NoRows);
    }
    let basis = basis::resolve_basis(spec, data)?;
    let x = build_design(&basis, data);
    let y = response_vector(data, response)?;
    let qr = mgs_select(&x, opts.rank_tol);
    let coef = qr.solve(&y);

    let mut fitted = DVector::zeros(y.len());
    for (k, &j) in qr.kept.iter().enumerate() {
        fitted.axpy(coef[k], &x.column(j).clone_owned(), 1.0);
    }
    let rss = (&y - &fitted).norm_squared();
    let dropped = qr
        .dropped
        .iter()
        .map(|&j| basis.labels()[j].clone())
        .collect();
    Ok(NuisanceFit {
        link: Link::Identity,
        basis,
        c_names: data.c_names.clone(),
        x_names: data.x_names.clone(),
        kept: qr.kept,
        coef,
        dropped,
        converged: true,
        iterations: 1,
        deviance: rss,
        deviance_trace: vec![rss],
    })
}

fn binomial_deviance(y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    let mut dev = 0.0;
    for i in 0..y.len() {
        // -2 [ y*eta - log(1 + e^eta) ], computed stably.
        let eta_i = eta[i];
        let log1pe = if eta_i > 0.0 {
            eta_i + (-eta_i).exp().ln_1p()
        } else {
            eta_i.exp().ln_1p()
        };
        dev += -2.0 * (y[i] * eta_i - log1pe);
    }
    dev
}

/// Logistic regression of a binary `response` on the basis, fit by IRLS
/// with step halving.
pub fn fit_logistic(
    data: &StackedData,
    response: &str,
    spec: &BasisSpec,
    opts: &FitOptions,
) -> Result<NuisanceFit, FitError> {
    if data.rows.is_empty() {
        return Err(FitError::NoRows);
    }
    let basis = basis::resolve_basis(spec, data)?;
    let x_full = build_design(&basis, data);
    let y = response_vector(data, response)?;
    for (i, &v) in y.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(FitError::InvalidResponse {
                column: response.to_string(),
                row: i + 1,
            });
        }
    }
    if y.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 1.0) {
        return Err(FitError::DegenerateResponse);
    }

    let selection = mgs_select(&x_full, opts.rank_tol);
    let kept = selection.kept.clone();
    let dropped: Vec<String> = selection
        .dropped
        .iter()
        .map(|&j| basis.labels()[j].clone())
        .collect();
    let m = data.rows.len();
    let k = kept.len();
    let mut x = DMatrix::zeros(m, k);
    for (col, &j) in kept.iter().enumerate() {
        x.set_column(col, &x_full.column(j));
    }

    let mut coef = DVector::zeros(k);
    let mut eta = DVector::zeros(m);
    let mut deviance = binomial_deviance(&y, &eta);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mut xw = DMatrix::zeros(m, k);
        let mut zw = DVector::zeros(m);
        for i in 0..m {
            let p = expit(eta[i]);
            let w = (p * (1.0 - p)).max(1e-10);
            let sw = w.sqrt();
            let z = eta[i] + (y[i] - p) / w;
            for col in 0..k {
                xw[(i, col)] = sw * x[(i, col)];
            }
            zw[i] = sw * z;
        }
        let qr = mgs_select(&xw, 1e-13);
        if qr.kept.len() != k {
            return Err(FitError::Singular);
        }
        let proposal = DVector::from_vec(qr.solve(&zw));

        // Step halving keeps the deviance non-increasing.
        let mut step = 1.0;
        let (mut new_coef, mut new_eta, mut new_dev);
        loop {
            new_coef = &coef + (&proposal - &coef) * step;
            new_eta = &x * &new_coef;
            new_dev = binomial_deviance(&y, &new_eta);
            if new_dev <= deviance + 1e-8 || step < 1.0 / 1024.0 {
                break;
            }
            step /= 2.0;
        }

        let max_abs = new_coef.amax();
        if max_abs > opts.separation_threshold {
            return Err(FitError::Separation {
                max_abs,
                threshold: opts.separation_threshold,
            });
        }

        let delta = (&new_coef - &coef).amax();
        coef = new_coef;
        eta = new_eta;
        deviance = new_dev;
        trace.push(deviance);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(NuisanceFit {
        link: Link::Logit,
        basis,
        c_names: data.c_names.clone(),
        x_names: data.x_names.clone(),
        kept,
        coef: coef.iter().copied().collect(),
        dropped,
        converged,
        iterations,
        deviance,
        deviance_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StackedRow;
    use rand::Rng;

    /// Builds twin-free stacked data with named own-covariates and optional
    /// exposure/response values.
    fn make_data(x_names: &[&str], rows: Vec<(Vec<f64>, u8, u8, f64)>) -> StackedData {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (x, a_own, a_cotwin, y))| StackedRow {
                pair_index: i / 2,
                pair_id: format!("p{}", i / 2),
                own: (i % 2 + 1) as u8,
                c: vec![],
                x_own: x.clone(),
                x_cotwin: x,
                a_own,
                a_cotwin,
                y_own: y,
            })
            .collect();
        StackedData {
            c_names: vec![],
            x_names: x_names.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    /// Gauss-Jordan inverse, independent of the fitting code.
    fn invert(a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, pivot);
            let p = m[col][col];
            for v in &mut m[col] {
                *v /= p;
            }
            for row in 0..n {
                if row != col {
                    let f = m[row][col];
                    for j in 0..2 * n {
                        m[row][j] -= f * m[col][j];
                    }
                }
            }
        }
        m.into_iter().map(|row| row[n..].to_vec()).collect()
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let mut rng = crate::rng::stream(11, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..50)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let y = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] + rng.gen_range(-1.0..1.0);
                (x, 0, 0, y)
            })
            .collect();
        let data = make_data(&["u", "v", "w"], rows);
        let spec = BasisSpec::new(vec![
            Term::linear("u"),
            Term::linear("v"),
            Term::linear("w"),
        ]);
        let fit = fit_linear(&data, "y_own", &spec, &FitOptions::default()).unwrap();

        // Oracle: beta = (X'X)^{-1} X'y with explicit inversion.
        let m = data.rows.len();
        let design: Vec<Vec<f64>> = data
            .rows
            .iter()
            .map(|r| vec![1.0, r.x_own[0], r.x_own[1], r.x_own[2]])
            .collect();
        let mut xtx = vec![vec![0.0; 4]; 4];
        let mut xty = vec![0.0; 4];
        for i in 0..m {
            for a in 0..4 {
                for b in 0..4 {
                    xtx[a][b] += design[i][a] * design[i][b];
                }
                xty[a] += design[i][a] * data.rows[i].y_own;
            }
        }
        let inv = invert(xtx);
        let oracle: Vec<f64> = (0..4)
            .map(|a| (0..4).map(|b| inv[a][b] * xty[b]).sum())
            .collect();

        let coefs = fit.coefficients();
        assert_eq!(coefs.len(), 4);
        for (k, (_, b)) in coefs.iter().enumerate() {
            assert!(
                (b - oracle[k]).abs() < 1e-8,
                "coef {k}: {b} vs oracle {}",
                oracle[k]
            );
        }
    }

    #[test]
    fn ols_recovers_exact_linear_responses() {
        let mut rng = crate::rng::stream(12, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..40)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let y = -0.5 + 1.25 * x[0] - 2.5 * x[1];
                (x, 0, 0, y)
            })
            .collect();
        let data = make_data(&["u", "v"], rows);
        let spec = BasisSpec::new(vec![Term::linear("u"), Term::linear("v")]);
        let fit = fit_linear(&data, "y_own", &spec, &FitOptions::default()).unwrap();
        let expected = [-0.5, 1.25, -2.5];
        for (k, (_, b)) in fit.coefficients().iter().enumerate() {
            assert!((b - expected[k]).abs() < 1e-10);
        }
        assert!(fit.deviance < 1e-18);
    }

    #[test]
    fn duplicated_column_is_dropped_and_recorded() {
        let mut rng = crate::rng::stream(13, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..30)
            .map(|_| {
                let u = rng.gen_range(-1.0..1.0);
                (vec![u, u], 0, 0, 2.0 * u + rng.gen_range(-0.1..0.1))
            })
            .collect();
        let data = make_data(&["u", "u_copy"], rows);
        let spec = BasisSpec::new(vec![Term::linear("u"), Term::linear("u_copy")]);
        let fit = fit_linear(&data, "y_own", &spec, &FitOptions::default()).unwrap();
        assert_eq!(fit.dropped, vec!["u_copy".to_string()]);
        assert_eq!(fit.coefficients().len(), 2);
        let pred = fit.predict(&data, ExposureOverride::default()).unwrap();
        for (p, r) in pred.iter().zip(&data.rows) {
            assert!((p - 2.0 * r.x_own[0]).abs() < 0.2);
        }
    }

    #[test]
    fn logistic_matches_grid_search_oracle() {
        let mut rng = crate::rng::stream(14, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..200)
            .map(|_| {
                let x = rng.gen_range(-2.5..2.5);
                let p = expit(0.5 - 0.8 * x);
                let a = u8::from(rng.gen_bool(p));
                (vec![x], a, 0, 0.0)
            })
            .collect();
        let data = make_data(&["x"], rows);
        let spec = BasisSpec::new(vec![Term::linear("x")]);
        let fit = fit_logistic(&data, "a_own", &spec, &FitOptions::default()).unwrap();
        assert!(fit.converged);

        // Oracle: shrinking-grid maximization of the Bernoulli likelihood.
        let loglik = |b0: f64, b1: f64| -> f64 {
            data.rows
                .iter()
                .map(|r| {
                    let eta = b0 + b1 * r.x_own[0];
                    let log1pe = if eta > 0.0 {
                        eta + (-eta).exp().ln_1p()
                    } else {
                        eta.exp().ln_1p()
                    };
                    f64::from(r.a_own) * eta - log1pe
                })
                .sum()
        };
        let (mut c0, mut c1, mut h) = (0.0, 0.0, 4.0);
        for _ in 0..14 {
            let mut best = (f64::NEG_INFINITY, c0, c1);
            for i in -10..=10 {
                for j in -10..=10 {
                    let b0 = c0 + h * (i as f64) / 10.0;
                    let b1 = c1 + h * (j as f64) / 10.0;
                    let ll = loglik(b0, b1);
                    if ll > best.0 {
                        best = (ll, b0, b1);
                    }
                }
            }
            c0 = best.1;
            c1 = best.2;
            h /= 5.0;
        }

        let coefs = fit.coefficients();
        assert!(
            (coefs[0].1 - c0).abs() < 1e-6,
            "intercept {} vs oracle {c0}",
            coefs[0].1
        );
        assert!(
            (coefs[1].1 - c1).abs() < 1e-6,
            "slope {} vs oracle {c1}",
            coefs[1].1
        );
    }

    #[test]
    fn logistic_score_vanishes_at_optimum() {
        let mut rng = crate::rng::stream(15, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..300)
            .map(|_| {
                let x = rng.gen_range(-2.0..2.0);
                let w = rng.gen_range(-2.0..2.0);
                let a = u8::from(rng.gen_bool(expit(0.3 * x - 0.6 * w)));
                (vec![x, w], a, 0, 0.0)
            })
            .collect();
        let data = make_data(&["x", "w"], rows);
        let spec = BasisSpec::new(vec![Term::linear("x"), Term::linear("w")]);
        let fit = fit_logistic(&data, "a_own", &spec, &FitOptions::default()).unwrap();
        let p = fit.predict(&data, ExposureOverride::default()).unwrap();
        let mut score = vec![0.0; 3];
        for (i, r) in data.rows.iter().enumerate() {
            let resid = f64::from(r.a_own) - p[i];
            score[0] += resid;
            score[1] += resid * r.x_own[0];
            score[2] += resid * r.x_own[1];
        }
        let norm = score.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!(
            norm < 1e-6 * data.rows.len() as f64,
            "score norm {norm} too large"
        );
    }

    #[test]
    fn perfectly_separated_data_is_an_error() {
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..40)
            .map(|i| {
                let x = (i as f64) / 10.0 - 2.0;
                (vec![x], u8::from(x > 0.0), 0, 0.0)
            })
            .collect();
        let data = make_data(&["x"], rows);
        let spec = BasisSpec::new(vec![Term::linear("x")]);
        let err = fit_logistic(&data, "a_own", &spec, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, FitError::Separation { .. }), "got {err:?}");
    }

    #[test]
    fn irls_deviance_is_monotone() {
        let mut rng = crate::rng::stream(16, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..150)
            .map(|_| {
                let x = rng.gen_range(-3.0..3.0);
                let a = u8::from(rng.gen_bool(expit(1.5 * x)));
                (vec![x], a, 0, 0.0)
            })
            .collect();
        let data = make_data(&["x"], rows);
        let fit = fit_logistic(
            &data,
            "a_own",
            &BasisSpec::new(vec![Term::linear("x")]),
            &FitOptions::default(),
        )
        .unwrap();
        for w in fit.deviance_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "deviance rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn overrides_only_move_exposure_terms() {
        let mut rng = crate::rng::stream(17, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..60)
            .map(|_| {
                let x = rng.gen_range(-1.0..1.0);
                let a_own = u8::from(rng.gen_bool(0.5));
                let a_cotwin = u8::from(rng.gen_bool(0.5));
                let y = 1.0 + 2.0 * f64::from(a_own) - 1.5 * f64::from(a_cotwin) + 0.7 * x;
                (vec![x], a_own, a_cotwin, y)
            })
            .collect();
        let data = make_data(&["x"], rows);
        let spec = BasisSpec::new(vec![
            Term::linear("a_own"),
            Term::linear("a_cotwin"),
            Term::linear("x"),
        ]);
        let fit = fit_linear(&data, "y_own", &spec, &FitOptions::default()).unwrap();
        let p11 = fit.predict(&data, ExposureOverride::pattern(1, 1)).unwrap();
        let p01 = fit.predict(&data, ExposureOverride::pattern(0, 1)).unwrap();
        let p00 = fit.predict(&data, ExposureOverride::pattern(0, 0)).unwrap();
        for i in 0..data.rows.len() {
            assert!((p11[i] - p01[i] - 2.0).abs() < 1e-9);
            assert!((p01[i] - p00[i] + 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn refit_on_identical_data_is_bitwise_identical() {
        let mut rng = crate::rng::stream(18, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..80)
            .map(|_| {
                let x = rng.gen_range(-2.0..2.0);
                let a = u8::from(rng.gen_bool(expit(0.4 * x)));
                (vec![x], a, 0, x * x + rng.gen_range(-0.5..0.5))
            })
            .collect();
        let data = make_data(&["x"], rows);
        let spec = BasisSpec::new(vec![Term::spline("x")]);
        let f1 = fit_linear(&data, "y_own", &spec, &FitOptions::default()).unwrap();
        let f2 = fit_linear(&data, "y_own", &spec, &FitOptions::default()).unwrap();
        assert_eq!(f1.coefficients(), f2.coefficients());
        let g1 = fit_logistic(&data, "a_own", &spec, &FitOptions::default()).unwrap();
        let g2 = fit_logistic(&data, "a_own", &spec, &FitOptions::default()).unwrap();
        assert_eq!(g1.coefficients(), g2.coefficients());
    }

    #[test]
    fn clip_config_bounds_probabilities() {
        let clip = PropensityClipConfig::new(0.05).unwrap();
        assert_eq!(clip.clip(0.001), 0.05);
        assert_eq!(clip.clip(0.999), 0.95);
        assert_eq!(clip.clip(0.4), 0.4);
        let off = PropensityClipConfig::none();
        assert_eq!(off.clip(1e-12), 1e-12);
        assert!(PropensityClipConfig::new(0.5).is_err());
        assert!(PropensityClipConfig::new(-0.1).is_err());
    }

    #[test]
    fn spline_fit_captures_a_quadratic_exactly() {
        let mut rng = crate::rng::stream(19, &[0]);
        let rows: Vec<(Vec<f64>, u8, u8, f64)> = (0..120)
            .map(|_| {
                let x = rng.gen_range(-2.0..2.0f64);
                (vec![x], 0, 0, x * x - 0.7 * x + 0.2)
            })
            .collect();
        let data = make_data(&["x"], rows);
        let fit = fit_linear(
            &data,
            "y_own",
            &BasisSpec::new(vec![Term::spline("x")]),
            &FitOptions::default(),
        )
        .unwrap();
        let pred = fit.predict(&data, ExposureOverride::default()).unwrap();
        for (p, r) in pred.iter().zip(&data.rows) {
            let x = r.x_own[0];
            assert!(
                (p - (x * x - 0.7 * x + 0.2)).abs() < 1e-8,
                "spline fit missed a quadratic at {x}"
            );
        }
    }
}
